// FIFO interaction-event buffer: flushes every two seconds and on page
// unload, so telemetry stays complete without one request per click.

import type { ApiClient } from "./api.js";
import type { ComponentKind, EventKind, TelemetryEvent } from "./types.js";

export const FLUSH_INTERVAL_MS = 2000;

export class TelemetryQueue {
  private queue: TelemetryEvent[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;
  private flushing = false;

  constructor(
    private api: Pick<ApiClient, "postEvents">,
    private now: () => string = () => new Date().toISOString(),
  ) {}

  emit(kind: EventKind, component: ComponentKind, element: string): void {
    this.queue.push({
      kind,
      target: { component, element },
      occurred_at: this.now(),
    });
  }

  pending(): readonly TelemetryEvent[] {
    return this.queue;
  }

  async flush(): Promise<void> {
    if (this.flushing || this.queue.length === 0) {
      return;
    }
    const batch = this.queue;
    this.queue = [];
    this.flushing = true;
    try {
      await this.api.postEvents(batch);
    } catch {
      // keep FIFO order: the failed batch goes back in front
      this.queue = batch.concat(this.queue);
    } finally {
      this.flushing = false;
    }
  }

  start(target: Window = window): void {
    if (this.timer !== null) {
      return;
    }
    this.timer = setInterval(() => {
      void this.flush();
    }, FLUSH_INTERVAL_MS);
    target.addEventListener("beforeunload", () => {
      void this.flush();
    });
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
