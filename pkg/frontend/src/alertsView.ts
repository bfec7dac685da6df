// Alert search view: query input, faceted filter panel, result list.
// Every number shown comes from the service; the view only formats.

import { ApiClient } from "./api.js";
import type { AlertFilters } from "./filterState.js";
import { toggleFacet } from "./filterState.js";
import type { AlertPage, FacetField } from "./types.js";

const FACET_FIELDS: FacetField[] = ["disease", "country", "algorithm"];

export interface AlertsViewDelegate {
  onFiltersChanged(next: AlertFilters): void;
  onOpenAlert(alertId: number): void;
}

export function renderAlerts(
  root: HTMLElement,
  page: AlertPage,
  filters: AlertFilters,
  delegate: AlertsViewDelegate,
): void {
  root.replaceChildren();

  const search = document.createElement("form");
  search.className = "search-row";
  const input = document.createElement("input");
  input.type = "search";
  input.placeholder = "search disease or country, e.g. measles";
  input.value = filters.q;
  const button = document.createElement("button");
  button.textContent = "Search";
  search.append(input, button);
  search.addEventListener("submit", (ev) => {
    ev.preventDefault();
    delegate.onFiltersChanged({ ...filters, q: input.value, page: 1 });
  });
  root.append(search);

  const layout = document.createElement("div");
  layout.className = "alerts-layout";
  layout.append(renderFacetPanel(page, filters, delegate), renderResultList(page, filters, delegate));
  root.append(layout);
}

function renderFacetPanel(
  page: AlertPage,
  filters: AlertFilters,
  delegate: AlertsViewDelegate,
): HTMLElement {
  const panel = document.createElement("aside");
  panel.className = "facets";
  for (const field of FACET_FIELDS) {
    const box = document.createElement("section");
    const title = document.createElement("h3");
    title.textContent = field;
    box.append(title);
    const counts = page.facets[field] ?? {};
    const entries = Object.entries(counts);
    if (entries.length === 0) {
      const empty = document.createElement("p");
      empty.className = "muted";
      empty.textContent = "no values";
      box.append(empty);
    }
    for (const [value, count] of entries) {
      const row = document.createElement("button");
      row.type = "button";
      row.className = "facet-row" + (filters[field] === value ? " selected" : "");
      row.textContent = `${value} (${count})`;
      row.addEventListener("click", () => delegate.onFiltersChanged(toggleFacet(filters, field, value)));
      box.append(row);
    }
    panel.append(box);
  }
  return panel;
}

function renderResultList(
  page: AlertPage,
  filters: AlertFilters,
  delegate: AlertsViewDelegate,
): HTMLElement {
  const container = document.createElement("section");
  container.className = "results";
  const summary = document.createElement("p");
  summary.textContent = `${page.total} alerts, page ${page.page} of ${page.pages}`;
  container.append(summary);

  if (page.alerts.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No alerts match the current filters.";
    container.append(empty);
    return container;
  }

  const table = document.createElement("table");
  const head = document.createElement("tr");
  for (const col of ["date", "disease", "country", "algorithm", "statistic", "observed", ""]) {
    const th = document.createElement("th");
    th.textContent = col;
    head.append(th);
  }
  table.append(head);
  for (const alert of page.alerts) {
    const tr = document.createElement("tr");
    const cells = [
      alert.date,
      alert.disease,
      alert.country,
      `${alert.algorithm} (${alert.params})`,
      alert.statistic === null ? "—" : alert.statistic.toFixed(2),
      String(alert.observed),
    ];
    for (const text of cells) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.append(td);
    }
    const open = document.createElement("td");
    const link = document.createElement("button");
    link.type = "button";
    link.textContent = "tweets";
    link.addEventListener("click", () => delegate.onOpenAlert(alert.alert_id));
    open.append(link);
    tr.append(open);
    table.append(tr);
  }
  container.append(table);

  const pager = document.createElement("div");
  pager.className = "pager";
  const prev = document.createElement("button");
  prev.textContent = "prev";
  prev.disabled = page.page <= 1;
  prev.addEventListener("click", () => delegate.onFiltersChanged({ ...filters, page: filters.page - 1 }));
  const next = document.createElement("button");
  next.textContent = "next";
  next.disabled = page.page >= page.pages;
  next.addEventListener("click", () => delegate.onFiltersChanged({ ...filters, page: filters.page + 1 }));
  pager.append(prev, next);
  container.append(pager);
  return container;
}

export async function loadAlerts(api: ApiClient, filters: AlertFilters): Promise<AlertPage> {
  return api.alerts(filters);
}
