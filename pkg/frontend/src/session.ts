/** Editing session against the render service.
 *
 * Owns the invariants the UI relies on:
 *  - the canvas never shows a frame older than the newest one shown or
 *    the last acknowledged edit (stale frames are discarded),
 *  - at most one PATCH is in flight, edits inside the debounce window
 *    coalesce into a single merge patch,
 *  - a rejected patch (400) rolls the local mirror back to the last
 *    acknowledged server state,
 *  - edits made while offline stay queued and flush on reconnect.
 *
 * Transport is injected so the same machine runs in the browser
 * (fetch + WebSocket) and under test (fakes or node clients).
 */

import {
  applyMergePatch,
  composeMergePatch,
  decodeFrame,
} from "./protocol.js";
import type {
  LiveFrame,
  MergePatch,
  PatchResult,
  SceneDoc,
} from "./protocol.js";

export interface LiveSocket {
  sendTime(t: number): void;
  close(): void;
}

export interface ServiceTransport {
  getScene(): Promise<{ revision: number; scene: SceneDoc }>;
  patchScene(patch: MergePatch, ifMatch: number): Promise<PatchResult>;
  openLive(
    onFrame: (frame: LiveFrame) => void,
    onClose: () => void,
  ): LiveSocket;
}

export type SessionStatus = "connected" | "offline" | "closed";

export interface SessionListeners {
  onFrame?: (frame: LiveFrame, png: Uint8Array) => void;
  onRevision?: (revision: number) => void;
  onError?: (message: string, issues: string[]) => void;
  onStatus?: (status: SessionStatus) => void;
}

export type CancelTimer = () => void;
export type Scheduler = (fn: () => void, ms: number) => CancelTimer;

const defaultScheduler: Scheduler = (fn, ms) => {
  const id = setTimeout(fn, ms);
  return () => clearTimeout(id);
};

export interface SessionOptions {
  debounceMs?: number;
  scheduler?: Scheduler;
  maxStaleRetries?: number;
}

export class UiSession {
  private serverDoc: SceneDoc;
  private optimisticDoc: SceneDoc;
  private revisionAcked: number;
  private shownRevision = -1;
  private pending: MergePatch | null = null;
  private inFlight = false;
  private cancelDebounce: CancelTimer | null = null;
  private socket: LiveSocket | null = null;
  private status: SessionStatus = "connected";
  private staleRetries = 0;
  private viewT = 0;

  private readonly transport: ServiceTransport;
  private readonly listeners: SessionListeners;
  private readonly debounceMs: number;
  private readonly schedule: Scheduler;
  private readonly maxStaleRetries: number;

  private constructor(
    transport: ServiceTransport,
    listeners: SessionListeners,
    opts: SessionOptions,
    revision: number,
    scene: SceneDoc,
  ) {
    this.transport = transport;
    this.listeners = listeners;
    this.debounceMs = opts.debounceMs ?? 30;
    this.schedule = opts.scheduler ?? defaultScheduler;
    this.maxStaleRetries = opts.maxStaleRetries ?? 3;
    this.serverDoc = scene;
    this.optimisticDoc = scene;
    this.revisionAcked = revision;
  }

  /** Sync revision and document via GET /scene and open the live feed.
   * Rejects if the service is unreachable; no session is created. */
  static async connect(
    transport: ServiceTransport,
    listeners: SessionListeners = {},
    opts: SessionOptions = {},
  ): Promise<UiSession> {
    const { revision, scene } = await transport.getScene();
    const session = new UiSession(transport, listeners, opts, revision, scene);
    session.openSocket();
    session.listeners.onRevision?.(revision);
    return session;
  }

  get revision(): number {
    return this.revisionAcked;
  }

  get displayedRevision(): number {
    return this.shownRevision;
  }

  get offline(): boolean {
    return this.status === "offline";
  }

  /** Current document mirror including optimistic (unacknowledged)
   * edits. */
  document(): SceneDoc {
    return this.optimisticDoc;
  }

  hasPendingEdit(): boolean {
    return this.pending !== null || this.inFlight;
  }

  /** Queue a merge patch. Applied to the mirror immediately; sent after
   * the debounce window, coalesced with any other edits queued in the
   * meantime. A null patch (no-op gesture) is ignored. */
  edit(patch: MergePatch | null): void {
    if (patch === null) {
      return;
    }
    this.optimisticDoc = applyMergePatch(this.optimisticDoc, patch) as SceneDoc;
    this.pending = this.pending === null
      ? patch
      : composeMergePatch(this.pending, patch);
    if (!this.inFlight && this.status !== "offline") {
      this.armDebounce();
    }
  }

  /** Scrub the per-connection time parameter. View state, not an edit:
   * no PATCH, no revision bump. */
  setTime(t: number): void {
    this.viewT = t;
    this.socket?.sendTime(t);
  }

  get time(): number {
    return this.viewT;
  }

  /** Re-sync after a drop: revision and document come fresh from the
   * server, queued edits are rebased onto them and flushed, and any
   * frame older than the re-synced revision is discarded. */
  async reconnect(): Promise<void> {
    const { revision, scene } = await this.transport.getScene();
    this.serverDoc = scene;
    this.revisionAcked = revision;
    this.staleRetries = 0;
    this.optimisticDoc = this.pending === null
      ? scene
      : (applyMergePatch(scene, this.pending) as SceneDoc);
    this.socket?.close();
    this.openSocket();
    this.setStatus("connected");
    this.listeners.onRevision?.(revision);
    if (this.pending !== null && !this.inFlight) {
      this.armDebounce();
    }
  }

  close(): void {
    this.cancelDebounce?.();
    this.cancelDebounce = null;
    this.socket?.close();
    this.socket = null;
    this.setStatus("closed");
  }

  private openSocket(): void {
    this.socket = this.transport.openLive(
      (frame) => this.handleFrame(frame),
      () => {
        if (this.status === "connected") {
          this.setStatus("offline");
        }
      },
    );
    if (this.viewT !== 0) {
      this.socket.sendTime(this.viewT);
    }
  }

  private handleFrame(frame: LiveFrame): void {
    const floor = Math.max(this.shownRevision, this.revisionAcked);
    if (frame.revision < floor) {
      return; // stale: an edit we acked (or a frame we showed) is newer
    }
    this.shownRevision = frame.revision;
    this.listeners.onFrame?.(frame, decodeFrame(frame));
  }

  private armDebounce(): void {
    this.cancelDebounce?.();
    this.cancelDebounce = this.schedule(() => {
      this.cancelDebounce = null;
      void this.flush();
    }, this.debounceMs);
  }

  private async flush(): Promise<void> {
    if (this.inFlight || this.pending === null || this.status === "offline") {
      return;
    }
    const patch = this.pending;
    this.pending = null;
    this.inFlight = true;
    let result: PatchResult;
    try {
      result = await this.transport.patchScene(patch, this.revisionAcked);
    } catch {
      // network failure: stay optimistic, queue the edit for reconnect
      this.inFlight = false;
      this.pending = this.pending === null
        ? patch
        : composeMergePatch(patch, this.pending);
      this.setStatus("offline");
      return;
    }
    this.inFlight = false;
    if (result.ok) {
      this.staleRetries = 0;
      this.serverDoc = applyMergePatch(this.serverDoc, patch) as SceneDoc;
      this.revisionAcked = result.revision;
      this.listeners.onRevision?.(result.revision);
      if (this.pending !== null) {
        this.armDebounce();
      }
      return;
    }
    if (result.status === 409 && this.staleRetries < this.maxStaleRetries) {
      // someone else advanced the scene: rebase this patch (plus any
      // newer edits) onto the fresh document and try again
      this.staleRetries += 1;
      this.pending = this.pending === null
        ? patch
        : composeMergePatch(patch, this.pending);
      await this.reconnect();
      return;
    }
    // 400 (or a stale loop): the edit is invalid against the real scene.
    // Drop it and everything built on top of it; the mirror returns to
    // the last acknowledged server state.
    this.pending = null;
    this.optimisticDoc = this.serverDoc;
    this.listeners.onError?.(
      result.status === 409 ? "edit conflicts with another session" : "edit rejected",
      result.issues,
    );
  }

  private setStatus(status: SessionStatus): void {
    if (this.status !== status) {
      this.status = status;
      this.listeners.onStatus?.(status);
    }
  }
}
