/** HTTP/WS transport for the render service.
 *
 * Isomorphic: the browser uses its own fetch and WebSocket; node tests
 * inject the ws package's constructor. Time scrubs sent before the
 * socket opens are buffered and flushed on open.
 */

import type { LiveSocket, ServiceTransport } from "./session.js";
import type {
  LiveFrame,
  MergePatch,
  PatchResult,
  SceneDoc,
} from "./protocol.js";

export interface WebSocketLike {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((ev: unknown) => void) | null;
  readyState: number;
  send(data: string): void;
  close(): void;
}

export type WebSocketCtor = new (url: string) => WebSocketLike;

export interface TransportOptions {
  fetchFn?: typeof fetch;
  WebSocketImpl?: WebSocketCtor;
}

const WS_OPEN = 1;

function wsUrl(baseUrl: string): string {
  return baseUrl.replace(/^http/, "ws").replace(/\/$/, "") + "/live";
}

export function makeTransport(
  baseUrl: string,
  opts: TransportOptions = {},
): ServiceTransport {
  const base = baseUrl.replace(/\/$/, "");
  const fetchFn = opts.fetchFn ?? fetch;
  const WsImpl =
    opts.WebSocketImpl ??
    ((globalThis as { WebSocket?: WebSocketCtor }).WebSocket as WebSocketCtor);
  if (!WsImpl) {
    throw new Error("no WebSocket implementation available");
  }

  return {
    async getScene(): Promise<{ revision: number; scene: SceneDoc }> {
      const resp = await fetchFn(`${base}/scene`);
      if (!resp.ok) {
        throw new Error(`GET /scene failed: ${resp.status}`);
      }
      const body = (await resp.json()) as { revision: number; scene: SceneDoc };
      return { revision: body.revision, scene: body.scene };
    },

    async patchScene(
      patch: MergePatch,
      ifMatch: number,
    ): Promise<PatchResult> {
      const resp = await fetchFn(`${base}/scene`, {
        method: "PATCH",
        headers: {
          "Content-Type": "application/json",
          "If-Match": String(ifMatch),
        },
        body: JSON.stringify(patch),
      });
      if (resp.ok) {
        const body = (await resp.json()) as { revision: number };
        return { ok: true, revision: body.revision };
      }
      let issues: string[] = [];
      try {
        const body = (await resp.json()) as { issues?: string[] };
        issues = body.issues ?? [];
      } catch {
        // non-JSON error body: keep the status alone
      }
      return { ok: false, status: resp.status, issues };
    },

    openLive(
      onFrame: (frame: LiveFrame) => void,
      onClose: () => void,
    ): LiveSocket {
      const ws = new WsImpl(wsUrl(base));
      let pendingT: number | null = null;
      ws.onopen = () => {
        if (pendingT !== null) {
          ws.send(JSON.stringify({ t: pendingT }));
          pendingT = null;
        }
      };
      ws.onmessage = (ev) => {
        const text =
          typeof ev.data === "string" ? ev.data : String(ev.data);
        let frame: LiveFrame;
        try {
          frame = JSON.parse(text) as LiveFrame;
        } catch {
          return; // not a frame; ignore
        }
        onFrame(frame);
      };
      ws.onclose = onClose;
      ws.onerror = () => {
        // the paired close event carries the state change
      };
      return {
        sendTime(t: number): void {
          if (ws.readyState === WS_OPEN) {
            ws.send(JSON.stringify({ t }));
          } else {
            pendingT = t;
          }
        },
        close(): void {
          ws.onclose = null; // deliberate close is not a drop
          ws.close();
        },
      };
    },
  };
}
