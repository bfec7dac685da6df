// UI round trip against a running epistream service: three analysts
// submit judgments through the labeling-console engine and the task
// resolves server-side with a retrain trigger in the journal; toggling
// an alert facet changes the list and the counts exactly as a direct
// API query reports them.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EMPTY_FILTERS, filtersToParams, toggleFacet } from "../src/filterState.js";
import { LabelingConsole, MemoryOutbox } from "../src/labelingConsole.js";

const PORT = 8907 + (process.pid % 50);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;
let storeDir: string;

async function waitForHealth(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(`${BASE}/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  storeDir = mkdtempSync(join(tmpdir(), "epistream-ui-"));
  const seeded = spawnSync("python3", [join(__dirname, "seed_store.py"), storeDir], {
    encoding: "utf-8",
  });
  if (seeded.status !== 0) throw new Error(`seeding failed: ${seeded.stderr}`);
  service = spawn("python3", ["-m", "epistream.cli", "serve", "--store", storeDir, "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForHealth();
});

afterAll(() => {
  service?.kill("SIGTERM");
});

describe("labeling console round trip", () => {
  it("three judgments resolve the task server-side and log a retrain trigger", async () => {
    const api = new ApiClient(BASE);
    const before = await api.labelQueue();
    expect(before.open_total).toBeGreaterThan(0);
    const targetTask = before.tasks[0].task_id;

    // three analysts each judge the same task once through the console engine
    const events = [];
    for (const analyst of ["analyst-a", "analyst-b", "analyst-c"]) {
      const console_ = new LabelingConsole(api, analyst, new MemoryOutbox());
      await console_.refresh();
      expect(console_.currentTask?.task_id).toBe(targetTask);
      events.push(await console_.submit("relevant"));
    }
    expect(events.map((e) => e?.kind)).toEqual(["submitted", "submitted", "resolved"]);

    const after = await api.labelQueue();
    expect(after.resolved_total).toBe(before.resolved_total + 1);
    expect(after.open_total).toBe(before.open_total - 1);
    expect(after.tasks.map((t) => t.task_id)).not.toContain(targetTask);

    // retrain trigger is persisted in the label journal
    const journal = readFileSync(join(storeDir, "labels", "journal.jsonl"), "utf-8");
    const retrains = journal
      .split("\n")
      .filter(Boolean)
      .map((line) => JSON.parse(line))
      .filter((event) => event.event === "retrain");
    expect(retrains.length).toBeGreaterThan(0);
    expect(retrains.at(-1).reason).toContain(targetTask);
  });

  it("a fourth judgment on the resolved task gets a conflict and skips", async () => {
    const api = new ApiClient(BASE);
    const console_ = new LabelingConsole(api, "analyst-d", new MemoryOutbox());
    await console_.refresh();
    // force the engine onto the resolved task id
    console_.tasks = [
      { task_id: "ui-task-0", message_id: "task-msg-0", text: "x", required: 3, judgments: 3 },
    ];
    console_.position = 0;
    const event = await console_.submit("irrelevant");
    expect(event?.kind).toBe("conflict");
  });
});

describe("alert facet toggle consistency", () => {
  it("toggling a country facet changes list and counts to match a direct query", async () => {
    const api = new ApiClient(BASE);
    const unfiltered = await api.alerts({ ...EMPTY_FILTERS });
    expect(unfiltered.total).toBeGreaterThan(0);
    const countries = Object.keys(unfiltered.facets.country);
    expect(countries.length).toBeGreaterThan(1);

    const toggled = toggleFacet({ ...EMPTY_FILTERS }, "country", "DE");
    const viaUi = await api.alerts(toggled);

    // every listed alert respects the filter
    expect(viaUi.alerts.every((a) => a.country === "DE")).toBe(true);
    // list shrank to the facet count advertised before the toggle
    expect(viaUi.total).toBe(unfiltered.facets.country["DE"]);
    // the country facet (ignoring its own filter) still shows all values
    expect(viaUi.facets.country).toEqual(unfiltered.facets.country);

    // direct API query with raw query params returns the identical page
    const params = filtersToParams(toggled);
    const direct = await fetch(`${BASE}/alerts?${params.toString()}`).then((r) => r.json());
    expect(direct).toEqual(viaUi);

    // toggling the same value off restores the unfiltered view
    const cleared = toggleFacet(toggled, "country", "DE");
    const back = await api.alerts(cleared);
    expect(back.total).toBe(unfiltered.total);
  });
});
