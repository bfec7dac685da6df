// App shell: tab routing, URL-encoded filter state, error banner, and
// wiring of the three views onto the service client.

import { ApiClient, ApiError } from "./api.js";
import { renderAlerts } from "./alertsView.js";
import { JudgmentExport, loadRankedPanel, renderRankedPanel } from "./contextView.js";
import { EMPTY_FILTERS, filtersFromParams, queryString, type AlertFilters } from "./filterState.js";
import { LabelingConsole, LocalStorageOutbox } from "./labelingConsole.js";

const api = new ApiClient(resolveBaseUrl());
const exporter = new JudgmentExport();
const workerId = localStorage.getItem("epistream.worker") ?? `analyst-${Math.random().toString(36).slice(2, 8)}`;
localStorage.setItem("epistream.worker", workerId);
const console_ = new LabelingConsole(api, workerId, new LocalStorageOutbox());

function resolveBaseUrl(): string {
  const meta = document.querySelector<HTMLMetaElement>('meta[name="epistream-api"]');
  return meta?.content || "http://127.0.0.1:8000";
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function showBanner(message: string, retry: () => void): void {
  const banner = el("banner");
  banner.replaceChildren();
  banner.classList.add("visible");
  const text = document.createElement("span");
  text.textContent = message;
  const button = document.createElement("button");
  button.textContent = "retry";
  button.addEventListener("click", () => {
    banner.classList.remove("visible");
    retry();
  });
  banner.append(text, button);
}

function clearBanner(): void {
  el("banner").classList.remove("visible");
}

// ----------------------------------------------------------------------
// alerts tab

let filters: AlertFilters = { ...EMPTY_FILTERS };

async function showAlerts(): Promise<void> {
  try {
    const page = await api.alerts(filters);
    clearBanner();
    renderAlerts(el("view"), page, filters, {
      onFiltersChanged(next) {
        filters = next;
        history.pushState(null, "", `#/alerts${queryString(filters)}`);
        void showAlerts();
      },
      onOpenAlert(alertId) {
        history.pushState(null, "", `#/alerts/${alertId}${queryString(filters)}`);
        void showAlertDetail(alertId);
      },
    });
  } catch (err) {
    handleError(err, showAlerts);
  }
}

async function showAlertDetail(alertId: number): Promise<void> {
  const view = el("view");
  try {
    const contexts = await api.contexts();
    const contextId = contexts.contexts.at(-1)?.context_id ?? null;
    const panel = await loadRankedPanel(api, alertId, contextId, 10);
    clearBanner();
    view.replaceChildren();
    const back = document.createElement("button");
    back.textContent = "← back to results";
    back.addEventListener("click", () => {
      history.pushState(null, "", `#/alerts${queryString(filters)}`);
      void showAlerts();
    });
    view.append(back);
    const host = document.createElement("div");
    view.append(host);
    renderRankedPanel(host, panel, contextId ?? "adhoc", exporter);
    const exportBtn = document.createElement("button");
    exportBtn.textContent = `export ${exporter.size} judgments`;
    exportBtn.addEventListener("click", () => downloadCsv(exporter.toCsv()));
    view.append(exportBtn);
  } catch (err) {
    handleError(err, () => showAlertDetail(alertId));
  }
}

function downloadCsv(text: string): void {
  const blob = new Blob([text], { type: "text/csv" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "judgments.csv";
  link.click();
  URL.revokeObjectURL(link.href);
}

// ----------------------------------------------------------------------
// labeling tab

async function showLabeling(): Promise<void> {
  try {
    await console_.refresh();
    clearBanner();
  } catch (err) {
    handleError(err, showLabeling);
    return;
  }
  renderLabeling();
}

function renderLabeling(): void {
  const view = el("view");
  view.replaceChildren();
  const guide = document.createElement("p");
  guide.className = "muted";
  guide.textContent = `Guideline: ${console_.guideline}`;
  view.append(guide);

  const progress = document.createElement("p");
  progress.id = "label-progress";
  progress.textContent =
    `${console_.resolvedTotal} resolved, ${console_.openTotal} open` +
    (console_.pendingOffline ? `, ${console_.pendingOffline} queued offline` : "");
  view.append(progress);

  const task = console_.currentTask;
  if (!task) {
    const done = document.createElement("p");
    done.className = "empty-state";
    done.textContent = "Queue drained. Well done.";
    view.append(done);
    return;
  }
  const card = document.createElement("blockquote");
  card.textContent = task.text;
  view.append(card);
  const hint = document.createElement("p");
  hint.className = "muted";
  hint.textContent = "press R for relevant, I for irrelevant";
  view.append(hint);
  const actions = document.createElement("div");
  for (const [label, key] of [["relevant", "R"], ["irrelevant", "I"]] as const) {
    const btn = document.createElement("button");
    btn.textContent = `${label} (${key})`;
    btn.addEventListener("click", () => void judge(label));
    actions.append(btn);
  }
  view.append(actions);
}

async function judge(label: "relevant" | "irrelevant"): Promise<void> {
  const event = await console_.submit(label);
  renderLabeling();
  if (event && (event.kind === "conflict" || event.kind === "error")) {
    const progress = document.getElementById("label-progress");
    if (progress) progress.textContent += ` — ${event.taskId}: ${event.detail}`;
  }
}

document.addEventListener("keydown", (ev) => {
  if (!location.hash.startsWith("#/label")) return;
  if (ev.key === "r" || ev.key === "R") void judge("relevant");
  if (ev.key === "i" || ev.key === "I") void judge("irrelevant");
});

window.addEventListener("online", () => void console_.flushOutbox());

// ----------------------------------------------------------------------
// contexts tab

async function showContexts(): Promise<void> {
  const view = el("view");
  try {
    const listing = await api.contexts();
    clearBanner();
    view.replaceChildren();
    const form = document.createElement("form");
    form.innerHTML = `
      <label>start <input name="start" type="date" required value="2011-05-01"></label>
      <label>end <input name="end" type="date" required value="2011-06-30"></label>
      <label>conditions <input name="conditions" placeholder="ehec, hus" required></label>
      <label>locations <input name="locations" placeholder="DE"></label>
      <button>save context</button>
      <span class="form-error" aria-live="polite"></span>`;
    form.addEventListener("submit", async (ev) => {
      ev.preventDefault();
      const data = new FormData(form);
      const errorBox = form.querySelector<HTMLElement>(".form-error")!;
      try {
        await api.createContext({
          start: String(data.get("start")),
          end: String(data.get("end")),
          conditions: String(data.get("conditions")).split(",").map((s) => s.trim()).filter(Boolean),
          locations: String(data.get("locations")).split(",").map((s) => s.trim()).filter(Boolean),
        });
        errorBox.textContent = "";
        void showContexts();
      } catch (err) {
        errorBox.textContent = err instanceof ApiError ? err.message : String(err);
      }
    });
    view.append(form);
    const list = document.createElement("ul");
    for (const ctx of listing.contexts) {
      const item = document.createElement("li");
      item.textContent = `${ctx.context_id}: ${ctx.conditions.join("/")} @ ${ctx.locations.join("/")} (${ctx.start}..${ctx.end})`;
      list.append(item);
    }
    view.append(list);
  } catch (err) {
    handleError(err, showContexts);
  }
}

// ----------------------------------------------------------------------
// routing

function handleError(err: unknown, retry: () => void | Promise<void>): void {
  const message =
    err instanceof ApiError
      ? `${err.code}: ${err.message}${err.retryable ? " (service may be down)" : ""}`
      : String(err);
  showBanner(message, () => void retry());
}

function route(): void {
  const hash = location.hash || "#/alerts";
  for (const tab of document.querySelectorAll("nav a")) {
    tab.classList.toggle("active", hash.startsWith(tab.getAttribute("href") ?? ""));
  }
  const detail = hash.match(/^#\/alerts\/(\d+)/);
  const query = hash.includes("?") ? hash.slice(hash.indexOf("?") + 1) : "";
  filters = filtersFromParams(new URLSearchParams(query));
  if (detail) {
    void showAlertDetail(Number(detail[1]));
  } else if (hash.startsWith("#/label")) {
    void showLabeling();
  } else if (hash.startsWith("#/contexts")) {
    void showContexts();
  } else {
    void showAlerts();
  }
}

window.addEventListener("hashchange", route);
window.addEventListener("popstate", route);
route();
void console_.flushOutbox();
