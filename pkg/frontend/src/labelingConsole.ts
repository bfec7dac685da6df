// Labeling console engine, DOM-free so it can be unit-tested in node.
//
// Judgments submit optimistically (the next task loads immediately).
// Every submission carries a client token; re-submitting a task the
// console has already judged is a no-op, so an accidental double
// keystroke records a single judgment. Submissions that fail with a
// network error are queued in a persistent outbox and flushed in order
// on reconnect; a 409 conflict means the task was resolved elsewhere
// and is skipped with a notice.

import { ApiClient, ApiError } from "./api.js";
import type { QueueTask } from "./types.js";

export interface PendingJudgment {
  taskId: string;
  label: string;
  token: string;
}

export interface OutboxStorage {
  load(): PendingJudgment[];
  save(items: PendingJudgment[]): void;
}

export class MemoryOutbox implements OutboxStorage {
  private items: PendingJudgment[] = [];
  load(): PendingJudgment[] {
    return [...this.items];
  }
  save(items: PendingJudgment[]): void {
    this.items = [...items];
  }
}

export class LocalStorageOutbox implements OutboxStorage {
  constructor(private key = "epistream.judgment.outbox") {}
  load(): PendingJudgment[] {
    try {
      return JSON.parse(window.localStorage.getItem(this.key) ?? "[]") as PendingJudgment[];
    } catch {
      return [];
    }
  }
  save(items: PendingJudgment[]): void {
    window.localStorage.setItem(this.key, JSON.stringify(items));
  }
}

export interface ConsoleEvent {
  kind: "submitted" | "resolved" | "conflict" | "queued_offline" | "flushed" | "error";
  taskId: string;
  detail: string;
}

export class LabelingConsole {
  tasks: QueueTask[] = [];
  position = 0;
  openTotal = 0;
  resolvedTotal = 0;
  guideline = "";
  events: ConsoleEvent[] = [];
  private submittedTokens = new Map<string, string>();

  constructor(
    private api: ApiClient,
    private workerId: string,
    private outbox: OutboxStorage = new MemoryOutbox(),
    private makeToken: () => string = () => Math.random().toString(36).slice(2),
  ) {}

  get currentTask(): QueueTask | null {
    return this.tasks[this.position] ?? null;
  }

  get pendingOffline(): number {
    return this.outbox.load().length;
  }

  async refresh(): Promise<void> {
    const page = await this.api.labelQueue(1, 50);
    this.tasks = page.tasks;
    this.position = 0;
    this.openTotal = page.open_total;
    this.resolvedTotal = page.resolved_total;
    this.guideline = page.guideline;
  }

  /** Single-keystroke entry point; advances to the next task immediately. */
  async submit(label: "relevant" | "irrelevant"): Promise<ConsoleEvent | null> {
    const task = this.currentTask;
    if (!task) return null;
    if (this.submittedTokens.has(task.task_id)) {
      return null; // idempotent: this console already judged the task
    }
    const token = this.makeToken();
    this.submittedTokens.set(task.task_id, token);
    this.position += 1; // optimistic advance
    return this.send({ taskId: task.task_id, label, token });
  }

  private async send(pending: PendingJudgment): Promise<ConsoleEvent> {
    let event: ConsoleEvent;
    try {
      const result = await this.api.submitJudgment(pending.taskId, this.workerId, pending.label);
      if (result.status === "open") {
        event = { kind: "submitted", taskId: pending.taskId, detail: `${result.judgments} judgments` };
      } else {
        this.resolvedTotal += 1;
        event = { kind: "resolved", taskId: pending.taskId, detail: result.resolved_label ?? result.status };
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        event = { kind: "conflict", taskId: pending.taskId, detail: "resolved elsewhere; skipped" };
      } else if (err instanceof ApiError && err.retryable) {
        const queue = this.outbox.load();
        queue.push(pending);
        this.outbox.save(queue);
        event = { kind: "queued_offline", taskId: pending.taskId, detail: "will retry on reconnect" };
      } else {
        event = { kind: "error", taskId: pending.taskId, detail: String(err) };
      }
    }
    this.events.push(event);
    return event;
  }

  /** Retry queued judgments in submission order; stops at the first network failure. */
  async flushOutbox(): Promise<number> {
    const queue = this.outbox.load();
    let flushed = 0;
    while (queue.length > 0) {
      const pending = queue[0];
      try {
        await this.api.submitJudgment(pending.taskId, this.workerId, pending.label);
        this.events.push({ kind: "flushed", taskId: pending.taskId, detail: pending.label });
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          this.events.push({ kind: "conflict", taskId: pending.taskId, detail: "resolved while offline" });
        } else if (err instanceof ApiError && err.retryable) {
          break; // still offline; keep order and try again later
        } else {
          this.events.push({ kind: "error", taskId: pending.taskId, detail: String(err) });
        }
      }
      queue.shift();
      flushed += 1;
      this.outbox.save(queue);
    }
    this.outbox.save(queue);
    return flushed;
  }
}
