// Alert-search filter state. The full state round-trips through the URL
// query string so result views are shareable links.

import type { FacetField } from "./types.js";

export interface AlertFilters {
  q: string;
  disease: string;
  country: string;
  algorithm: string;
  from: string;
  to: string;
  page: number;
  pageSize: number;
}

export const EMPTY_FILTERS: AlertFilters = {
  q: "",
  disease: "",
  country: "",
  algorithm: "",
  from: "",
  to: "",
  page: 1,
  pageSize: 25,
};

const PARAM_KEYS: Record<string, string> = {
  q: "q",
  disease: "disease",
  country: "country",
  algorithm: "algorithm",
  from: "from",
  to: "to",
};

export function filtersToParams(filters: AlertFilters): URLSearchParams {
  const params = new URLSearchParams();
  for (const [field, key] of Object.entries(PARAM_KEYS)) {
    const value = filters[field as keyof AlertFilters];
    if (value) params.set(key, String(value));
  }
  if (filters.page !== 1) params.set("page", String(filters.page));
  if (filters.pageSize !== EMPTY_FILTERS.pageSize) params.set("page_size", String(filters.pageSize));
  return params;
}

export function filtersFromParams(params: URLSearchParams): AlertFilters {
  const read = (key: string) => params.get(key) ?? "";
  const page = Number.parseInt(params.get("page") ?? "1", 10);
  const pageSize = Number.parseInt(params.get("page_size") ?? String(EMPTY_FILTERS.pageSize), 10);
  return {
    q: read("q"),
    disease: read("disease"),
    country: read("country"),
    algorithm: read("algorithm"),
    from: read("from"),
    to: read("to"),
    page: Number.isFinite(page) && page >= 1 ? page : 1,
    pageSize: Number.isFinite(pageSize) && pageSize >= 1 ? pageSize : EMPTY_FILTERS.pageSize,
  };
}

/** Toggling a selected facet value clears it; picking a new one resets paging. */
export function toggleFacet(filters: AlertFilters, field: FacetField, value: string): AlertFilters {
  const current = filters[field];
  return { ...filters, [field]: current === value ? "" : value, page: 1 };
}

export function queryString(filters: AlertFilters): string {
  const params = filtersToParams(filters);
  const text = params.toString();
  return text ? `?${text}` : "";
}
