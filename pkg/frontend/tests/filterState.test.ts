import { describe, expect, it } from "vitest";

import {
  EMPTY_FILTERS,
  filtersFromParams,
  filtersToParams,
  queryString,
  toggleFacet,
  type AlertFilters,
} from "../src/filterState.js";

describe("filter state URL round-trip", () => {
  it("round-trips every field", () => {
    const filters: AlertFilters = {
      q: "measles",
      disease: "ehec",
      country: "DE",
      algorithm: "farrington",
      from: "2011-05-01",
      to: "2011-07-31",
      page: 3,
      pageSize: 10,
    };
    const back = filtersFromParams(filtersToParams(filters));
    expect(back).toEqual(filters);
  });

  it("empty state yields an empty query string", () => {
    expect(queryString({ ...EMPTY_FILTERS })).toBe("");
  });

  it("round-trips randomized states", () => {
    const diseases = ["", "ehec", "cholera", "mumps"];
    const countries = ["", "DE", "KE", "CA"];
    for (let i = 0; i < 200; i++) {
      const filters: AlertFilters = {
        q: i % 3 ? "" : `term${i}`,
        disease: diseases[i % diseases.length],
        country: countries[(i * 7) % countries.length],
        algorithm: i % 2 ? "ears_c1" : "",
        from: i % 5 ? "" : "2011-01-01",
        to: "",
        page: (i % 4) + 1,
        pageSize: i % 2 ? 25 : 50,
      };
      expect(filtersFromParams(filtersToParams(filters))).toEqual(filters);
    }
  });

  it("ignores malformed paging", () => {
    const params = new URLSearchParams("page=zero&page_size=-4");
    const filters = filtersFromParams(params);
    expect(filters.page).toBe(1);
    expect(filters.pageSize).toBe(EMPTY_FILTERS.pageSize);
  });
});

describe("facet toggling", () => {
  it("selects then clears", () => {
    const selected = toggleFacet({ ...EMPTY_FILTERS }, "country", "DE");
    expect(selected.country).toBe("DE");
    const cleared = toggleFacet(selected, "country", "DE");
    expect(cleared.country).toBe("");
  });

  it("switching value resets paging", () => {
    const paged = { ...EMPTY_FILTERS, page: 4, country: "DE" };
    const next = toggleFacet(paged, "country", "KE");
    expect(next.country).toBe("KE");
    expect(next.page).toBe(1);
  });
});
