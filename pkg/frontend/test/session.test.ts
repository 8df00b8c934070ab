import { describe, expect, it } from "vitest";

import {
  applyMergePatch,
  composeMergePatch,
  decodeFrame,
} from "../src/protocol.js";
import type {
  Json,
  LiveFrame,
  MergePatch,
  PatchResult,
  SceneDoc,
} from "../src/protocol.js";
import { UiSession } from "../src/session.js";
import type {
  Scheduler,
  ServiceTransport,
  SessionStatus,
} from "../src/session.js";

/** Deterministic stand-in for setTimeout: tasks run when fire() says so. */
class ManualClock {
  private tasks: (() => void)[] = [];

  scheduler: Scheduler = (fn) => {
    this.tasks.push(fn);
    return () => {
      const i = this.tasks.indexOf(fn);
      if (i >= 0) {
        this.tasks.splice(i, 1);
      }
    };
  };

  get armed(): number {
    return this.tasks.length;
  }

  /** Run every due task, then let the promise chain settle. */
  async fire(): Promise<void> {
    for (const fn of this.tasks.splice(0)) {
      fn();
    }
    await new Promise((r) => setTimeout(r, 0));
  }
}

class FakeTransport implements ServiceTransport {
  scene: SceneDoc;
  revision: number;
  patches: { patch: MergePatch; ifMatch: number }[] = [];
  getSceneCalls = 0;
  socketsOpened = 0;
  sentTimes: number[] = [];
  failPatches = false;
  hold = false;
  respond: ((patch: MergePatch, ifMatch: number) => PatchResult) | null = null;

  private held: ((r: PatchResult) => void)[] = [];
  private onFrame: ((frame: LiveFrame) => void) | null = null;
  private onDrop: (() => void) | null = null;

  constructor(scene: SceneDoc = { exposure: 1.0 }, revision = 0) {
    this.scene = scene;
    this.revision = revision;
  }

  async getScene() {
    this.getSceneCalls += 1;
    return {
      revision: this.revision,
      scene: JSON.parse(JSON.stringify(this.scene)) as SceneDoc,
    };
  }

  patchScene(patch: MergePatch, ifMatch: number): Promise<PatchResult> {
    this.patches.push({ patch, ifMatch });
    if (this.failPatches) {
      return Promise.reject(new Error("connection refused"));
    }
    if (this.hold) {
      return new Promise((res) => this.held.push(res));
    }
    return Promise.resolve(
      this.respond ? this.respond(patch, ifMatch) : this.accept(patch),
    );
  }

  accept(patch: MergePatch): PatchResult {
    this.scene = applyMergePatch(this.scene, patch) as SceneDoc;
    this.revision += 1;
    return { ok: true, revision: this.revision };
  }

  /** Resolve the oldest held PATCH, accepting it unless told otherwise. */
  release(result?: PatchResult): void {
    const resolve = this.held.shift();
    if (!resolve) {
      throw new Error("no held patch");
    }
    const last = this.patches[this.patches.length - this.held.length - 1]!;
    resolve(result ?? this.accept(last.patch));
  }

  openLive(onFrame: (frame: LiveFrame) => void, onClose: () => void) {
    this.socketsOpened += 1;
    this.onFrame = onFrame;
    this.onDrop = onClose;
    return {
      sendTime: (t: number) => this.sentTimes.push(t),
      close: () => {
        this.onFrame = null;
      },
    };
  }

  pushFrame(revision: number, t = 0, payload = `frame-${revision}`): void {
    this.onFrame?.({
      revision,
      t,
      format: "png",
      data_base64: Buffer.from(payload).toString("base64"),
    });
  }

  dropSocket(): void {
    this.onDrop?.();
  }
}

async function settle(): Promise<void> {
  await new Promise((r) => setTimeout(r, 0));
}

type Harness = {
  transport: FakeTransport;
  clock: ManualClock;
  session: UiSession;
  shown: number[];
  revisions: number[];
  errors: { message: string; issues: string[] }[];
  statuses: SessionStatus[];
};

async function harness(
  scene: SceneDoc = { exposure: 1.0, lights: [] },
  revision = 0,
  opts: { maxStaleRetries?: number } = {},
): Promise<Harness> {
  const transport = new FakeTransport(scene, revision);
  const clock = new ManualClock();
  const shown: number[] = [];
  const revisions: number[] = [];
  const errors: { message: string; issues: string[] }[] = [];
  const statuses: SessionStatus[] = [];
  const session = await UiSession.connect(
    transport,
    {
      onFrame: (frame) => shown.push(frame.revision),
      onRevision: (r) => revisions.push(r),
      onError: (message, issues) => errors.push({ message, issues }),
      onStatus: (status) => statuses.push(status),
    },
    { scheduler: clock.scheduler, ...opts },
  );
  return { transport, clock, session, shown, revisions, errors, statuses };
}

describe("UiSession", () => {
  it("mirrors the served scene and revision on connect", async () => {
    const { transport, session, revisions } = await harness(
      { exposure: 2.0 },
      7,
    );
    expect(session.revision).toBe(7);
    expect(session.document()).toEqual({ exposure: 2.0 });
    expect(revisions).toEqual([7]);
    expect(transport.socketsOpened).toBe(1);
  });

  it("propagates an unreachable server instead of building a session", async () => {
    const transport = new FakeTransport();
    transport.getScene = async () => {
      throw new Error("connection refused");
    };
    await expect(UiSession.connect(transport)).rejects.toThrow(
      "connection refused",
    );
    expect(transport.socketsOpened).toBe(0);
  });

  it("applies edits optimistically and coalesces them into one PATCH", async () => {
    const { transport, clock, session } = await harness();
    session.edit({ exposure: 2.0 });
    session.edit({ bleed: 0.5 });
    session.edit(null); // idle gesture, ignored
    expect(session.document()).toEqual({
      exposure: 2.0,
      bleed: 0.5,
      lights: [],
    });
    expect(transport.patches).toHaveLength(0); // still inside the window
    await clock.fire();
    expect(transport.patches).toHaveLength(1);
    expect(transport.patches[0]!.patch).toEqual({ exposure: 2.0, bleed: 0.5 });
    expect(transport.patches[0]!.ifMatch).toBe(0);
    expect(session.revision).toBe(1);
    expect(session.hasPendingEdit()).toBe(false);
  });

  it("keeps at most one PATCH in flight", async () => {
    const { transport, clock, session } = await harness();
    transport.hold = true;
    session.edit({ exposure: 2.0 });
    await clock.fire();
    expect(transport.patches).toHaveLength(1);

    session.edit({ bleed: 0.25 });
    // nothing armed while the first PATCH is out
    expect(clock.armed).toBe(0);
    expect(transport.patches).toHaveLength(1);

    transport.release();
    await settle();
    expect(clock.armed).toBe(1); // deferred edit rearmed after the ack
    await clock.fire();
    expect(transport.patches).toHaveLength(2);
    expect(transport.patches[1]!.patch).toEqual({ bleed: 0.25 });
    expect(transport.patches[1]!.ifMatch).toBe(1);
  });

  it("shows equal-or-newer frames and discards older ones", async () => {
    const { transport, session, shown } = await harness();
    transport.pushFrame(0);
    transport.pushFrame(2);
    transport.pushFrame(1); // stale: a newer frame was already shown
    transport.pushFrame(2); // same revision rerenders (time scrubs) pass
    expect(shown).toEqual([0, 2, 2]);
    expect(session.displayedRevision).toBe(2);
  });

  it("discards frames older than the last acknowledged edit", async () => {
    const { transport, clock, session, shown } = await harness();
    session.edit({ exposure: 3.0 });
    await clock.fire();
    expect(session.revision).toBe(1);
    transport.pushFrame(0); // render of the pre-edit scene, too late
    expect(shown).toEqual([]);
    transport.pushFrame(1);
    expect(shown).toEqual([1]);
  });

  it("rolls back to server state on a rejected edit and recovers", async () => {
    const { transport, clock, session, errors } = await harness();
    transport.respond = () => ({
      ok: false,
      status: 400,
      issues: ["shading.basis: unknown kind"],
    });
    session.edit({ shading: { basis: { kind: "nope" } } });
    expect(session.document()).toHaveProperty("shading");
    await clock.fire();
    expect(errors).toEqual([
      { message: "edit rejected", issues: ["shading.basis: unknown kind"] },
    ]);
    expect(session.document()).toEqual({ exposure: 1.0, lights: [] });
    expect(session.revision).toBe(0);

    // the session is not wedged: a valid edit still lands
    transport.respond = null;
    session.edit({ exposure: 2.0 });
    await clock.fire();
    expect(session.revision).toBe(1);
    expect(session.document()).toEqual({ exposure: 2.0, lights: [] });
  });

  it("queues edits while offline and flushes them on reconnect", async () => {
    const { transport, clock, session, statuses } = await harness();
    transport.failPatches = true;
    session.edit({ exposure: 2.0 });
    await clock.fire();
    expect(session.offline).toBe(true);
    expect(statuses).toEqual(["offline"]);
    expect(session.hasPendingEdit()).toBe(true);
    // still optimistic locally
    expect(session.document()).toEqual({ exposure: 2.0, lights: [] });

    session.edit({ bleed: 0.5 });
    expect(clock.armed).toBe(0); // no flush attempts while offline

    transport.failPatches = false;
    await session.reconnect();
    expect(session.offline).toBe(false);
    await clock.fire();
    expect(transport.patches).toHaveLength(2); // the failed try plus the flush
    expect(transport.patches[1]!.patch).toEqual({
      exposure: 2.0,
      bleed: 0.5,
    });
    expect(session.hasPendingEdit()).toBe(false);
    expect(session.document()).toEqual({
      exposure: 2.0,
      bleed: 0.5,
      lights: [],
    });
  });

  it("rebases onto the fresh scene after a revision conflict", async () => {
    const { transport, clock, session, errors } = await harness();
    transport.respond = () => {
      // another session advanced the scene first
      transport.respond = null;
      transport.scene = { exposure: 9.0, lights: [] };
      transport.revision = 5;
      return { ok: false, status: 409, issues: [] };
    };
    session.edit({ bleed: 0.5 });
    await clock.fire(); // 409, resync
    await clock.fire(); // retry against the fresh revision
    expect(errors).toEqual([]);
    expect(transport.patches).toHaveLength(2);
    expect(transport.patches[1]!.ifMatch).toBe(5);
    expect(session.revision).toBe(6);
    // rebased: the other session's change and ours both present
    expect(session.document()).toEqual({
      exposure: 9.0,
      bleed: 0.5,
      lights: [],
    });
  });

  it("gives up after repeated conflicts", async () => {
    const { transport, clock, session, errors } = await harness(
      { exposure: 1.0, lights: [] },
      0,
      { maxStaleRetries: 0 },
    );
    transport.respond = () => ({ ok: false, status: 409, issues: [] });
    session.edit({ bleed: 0.5 });
    await clock.fire();
    expect(errors).toEqual([
      { message: "edit conflicts with another session", issues: [] },
    ]);
    expect(session.document()).toEqual({ exposure: 1.0, lights: [] });
    expect(session.hasPendingEdit()).toBe(false);
  });

  it("scrubs time over the socket without issuing a PATCH", async () => {
    const { transport, clock, session } = await harness();
    session.setTime(0.25);
    session.setTime(0.5);
    await clock.fire();
    expect(transport.sentTimes).toEqual([0.25, 0.5]);
    expect(transport.patches).toHaveLength(0);
    expect(session.revision).toBe(0);
    expect(session.time).toBe(0.5);
  });

  it("replays the scrub position onto a fresh socket", async () => {
    const { transport, session } = await harness();
    session.setTime(0.75);
    await session.reconnect();
    expect(transport.socketsOpened).toBe(2);
    expect(transport.sentTimes).toEqual([0.75, 0.75]);
  });

  it("treats a socket drop as offline, a deliberate close as final", async () => {
    const first = await harness();
    first.transport.dropSocket();
    expect(first.session.offline).toBe(true);
    expect(first.statuses).toEqual(["offline"]);

    const second = await harness();
    second.session.close();
    expect(second.statuses).toEqual(["closed"]);
    expect(second.session.offline).toBe(false);
  });

  it("resyncs the revision floor on reconnect", async () => {
    const { transport, session, shown } = await harness();
    transport.pushFrame(0);
    transport.revision = 5; // scene moved on while we were away
    await session.reconnect();
    transport.pushFrame(3); // rendered before the resync, stale
    transport.pushFrame(5);
    expect(shown).toEqual([0, 5]);
    expect(session.revision).toBe(5);
  });
});

describe("merge patch algebra", () => {
  it("deletes on null, recurses on objects, replaces arrays", () => {
    const doc: Json = {
      keep: 1,
      drop: 2,
      nest: { a: 1, b: 2 },
      arr: [1, 2, 3],
    };
    const out = applyMergePatch(doc, {
      drop: null,
      nest: { b: 7 },
      arr: [9],
    });
    expect(out).toEqual({ keep: 1, nest: { a: 1, b: 7 }, arr: [9] });
    // input untouched
    expect(doc).toEqual({
      keep: 1,
      drop: 2,
      nest: { a: 1, b: 2 },
      arr: [1, 2, 3],
    });
  });

  it("replaces the whole target for a non-object patch", () => {
    expect(applyMergePatch({ a: 1 }, [1, 2])).toEqual([1, 2]);
    expect(applyMergePatch({ a: 1 }, 5)).toBe(5);
  });

  it("composes so apply(t, a∘b) equals apply(apply(t, a), b)", () => {
    const cases: { t: Json; a: Json; b: Json }[] = [
      {
        t: { x: 1, y: { z: 2 } },
        a: { y: { z: 3, w: 4 } },
        b: { y: { z: null }, x: 9 },
      },
      { t: { x: 1 }, a: { x: null }, b: { w: [1, 2] } },
      { t: { arr: [1, 2, 3] }, a: { arr: [4] }, b: { arr: [5, 6] } },
      { t: { deep: { a: { b: 1 } } }, a: { deep: { a: { c: 2 } } }, b: { deep: { a: { b: null } } } },
      { t: { k: 1 }, a: 5, b: { k: 2 } },
      { t: { k: 1 }, a: { k: 2 }, b: 7 },
    ];
    for (const { t, a, b } of cases) {
      expect(applyMergePatch(t, composeMergePatch(a, b))).toEqual(
        applyMergePatch(applyMergePatch(t, a), b),
      );
    }
  });
});

describe("decodeFrame", () => {
  it("round-trips arbitrary bytes through base64", () => {
    const bytes = Uint8Array.from([137, 80, 78, 71, 0, 255, 1]);
    const frame: LiveFrame = {
      revision: 0,
      t: 0,
      format: "png",
      data_base64: Buffer.from(bytes).toString("base64"),
    };
    expect(Array.from(decodeFrame(frame))).toEqual(Array.from(bytes));
  });
});
