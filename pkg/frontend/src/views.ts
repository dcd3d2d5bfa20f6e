/** DOM rendering. Deliberately thin: all decisions live in form.ts /
 * chart.ts / poll.ts; this file only turns their outputs into elements. */

import { ApiClient, ApiError } from "./api.js";
import { chartGeometry, metricKeys, overlaySeries } from "./chart.js";
import { buildTemplateForm, canSubmit, missingRequired, submissionParams } from "./form.js";
import type { ClusterSnapshot, ExperimentRecord, ExperimentSummary } from "./model.js";
import { TERMINAL_STATUSES } from "./model.js";
import { Poller, PollState } from "./poll.js";

const PALETTE = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2"];

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function statusChip(status: string): HTMLElement {
  return el("span", { class: `chip chip-${status.toLowerCase()}` }, status);
}

function banner(state: PollState<unknown>): HTMLElement {
  if (state.error) {
    return el("div", { class: "banner banner-error" }, `connection lost: ${state.error} (retrying)`);
  }
  if (state.fetchedAt !== null) {
    const when = new Date(state.fetchedAt).toLocaleTimeString();
    return el("div", { class: "banner banner-ok" }, `fetched ${when}`);
  }
  return el("div", { class: "banner" }, "loading...");
}

export interface ViewContext {
  api: ApiClient;
  root: HTMLElement;
  pollIntervalMs: number;
  navigate: (hash: string) => void;
  registerPoller: (poller: { stop(): void }) => void;
}

// -- dashboard ----------------------------------------------------------------

export function dashboardView(ctx: ViewContext): void {
  const container = el("div");
  ctx.root.replaceChildren(container);

  const render = (state: PollState<{ experiments: ExperimentSummary[] }>) => {
    const rows = state.data?.experiments ?? [];
    const table = el(
      "table",
      { class: "listing" },
      el(
        "thead",
        {},
        el("tr", {}, el("th", {}, "id"), el("th", {}, "name"), el("th", {}, "status"),
           el("th", {}, "created"), el("th", {}, "")),
      ),
      el(
        "tbody",
        {},
        ...rows.map((summary) => {
          const open = el("a", { href: `#/experiment/${summary.id}` }, summary.id);
          const kill = el("button", { class: "small" }, "kill");
          kill.onclick = async () => {
            kill.setAttribute("disabled", "1");
            try {
              await ctx.api.killExperiment(summary.id);
              await poller.tick();
            } catch (err) {
              kill.removeAttribute("disabled");
              alert(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
            }
          };
          return el(
            "tr",
            {},
            el("td", {}, open),
            el("td", {}, summary.name),
            el("td", {}, statusChip(summary.status)),
            el("td", {}, new Date(summary.created_at).toLocaleString()),
            el("td", {}, ...(TERMINAL_STATUSES.has(summary.status) ? [] : [kill])),
          );
        }),
      ),
    );
    const empty = el("p", { class: "empty" }, "no experiments yet - run one from a template");
    container.replaceChildren(banner(state), rows.length ? table : empty);
  };

  const poller = new Poller(() => ctx.api.listExperiments(), render, ctx.pollIntervalMs);
  ctx.registerPoller(poller);
  poller.start();
}

// -- experiment detail -----------------------------------------------------------

export function experimentView(ctx: ViewContext, id: string): void {
  const container = el("div");
  ctx.root.replaceChildren(container);

  const render = (state: PollState<{ record: ExperimentRecord; logs: string }>) => {
    if (!state.data) {
      container.replaceChildren(banner(state));
      return;
    }
    const { record, logs } = state.data;
    const kill = el("button", {}, "kill");
    kill.onclick = async () => {
      try {
        await ctx.api.killExperiment(record.id);
        await poller.tick();
      } catch (err) {
        alert(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
      }
    };
    const header = el(
      "div",
      { class: "detail-header" },
      el("h2", {}, record.spec.meta.name, " ", statusChip(record.status)),
      el("p", { class: "mono" }, record.id, " on ", record.resolved_image),
      ...(TERMINAL_STATUSES.has(record.status) ? [] : [kill]),
    );
    const events = el(
      "section",
      {},
      el("h3", {}, "events"),
      el(
        "ul",
        { class: "events" },
        ...record.events.map((e) =>
          el(
            "li",
            {},
            el("span", { class: "mono" }, new Date(e.timestamp).toLocaleTimeString()),
            ` ${e.kind}: ${e.detail}${e.late ? " (late)" : ""}`,
          ),
        ),
      ),
    );
    const logsSection = el(
      "section",
      {},
      el("h3", {}, "logs"),
      el("pre", { class: "logs" }, logs || "(no output yet)"),
    );
    const chartSection = el("section", {}, el("h3", {}, "metrics"));
    const keys = metricKeys([record]);
    if (keys.length === 0) {
      chartSection.append(el("p", { class: "empty" }, "no metrics reported"));
    } else {
      for (const key of keys) {
        chartSection.append(renderOverlay([record], key));
      }
    }
    container.replaceChildren(banner(state), header, events, chartSection, logsSection);
  };

  const poller = new Poller(
    async () => ({
      record: await ctx.api.getExperiment(id),
      logs: await ctx.api.getLogs(id),
    }),
    render,
    ctx.pollIntervalMs,
  );
  ctx.registerPoller(poller);
  poller.start();
}

// -- metric comparison ---------------------------------------------------------------

export function renderOverlay(records: ExperimentRecord[], key: string): HTMLElement {
  const series = overlaySeries(records, key);
  const geometry = chartGeometry(series);
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${geometry.width} ${geometry.height}`);
  svg.setAttribute("class", "chart");
  geometry.paths.forEach((path, i) => {
    const line = document.createElementNS("http://www.w3.org/2000/svg", "path");
    line.setAttribute("d", path.d);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", PALETTE[i % PALETTE.length]);
    line.setAttribute("stroke-width", "2");
    svg.append(line);
  });
  const legend = el(
    "div",
    { class: "legend" },
    ...series.map((s, i) =>
      el("span", { style: `color: ${PALETTE[i % PALETTE.length]}` }, s.experimentId),
    ),
  );
  return el("div", { class: "overlay" }, el("h4", {}, key), svg, legend);
}

export function compareView(ctx: ViewContext, ids: string[]): void {
  const container = el("div");
  ctx.root.replaceChildren(container);

  const render = (state: PollState<ExperimentRecord[]>) => {
    const records = state.data ?? [];
    const sections = metricKeys(records).map((key) => renderOverlay(records, key));
    container.replaceChildren(
      banner(state),
      el("h2", {}, `comparing ${ids.length} experiments`),
      ...(sections.length ? sections : [el("p", { class: "empty" }, "no shared metrics yet")]),
    );
  };

  const poller = new Poller(
    () => Promise.all(ids.map((id) => ctx.api.getExperiment(id))),
    render,
    ctx.pollIntervalMs,
  );
  ctx.registerPoller(poller);
  poller.start();
}

// -- templates ------------------------------------------------------------------------

export function templatesView(ctx: ViewContext): void {
  const container = el("div");
  ctx.root.replaceChildren(container);
  void (async () => {
    try {
      const { templates } = await ctx.api.listTemplates();
      container.replaceChildren(
        el("h2", {}, "templates"),
        el(
          "ul",
          { class: "templates" },
          ...templates.map((t) =>
            el(
              "li",
              {},
              el("a", { href: `#/template/${t.name}` }, t.name),
              ` - ${t.description}`,
            ),
          ),
        ),
      );
      if (templates.length === 0) {
        container.append(el("p", { class: "empty" }, "no templates registered"));
      }
    } catch (err) {
      container.replaceChildren(renderError(err));
    }
  })();
}

function renderError(err: unknown): HTMLElement {
  if (err instanceof ApiError) {
    return el("div", { class: "banner banner-error" }, `${err.code}: ${err.message}`);
  }
  return el("div", { class: "banner banner-error" }, String(err));
}

export function templateFormView(ctx: ViewContext, name: string): void {
  const container = el("div");
  ctx.root.replaceChildren(container);
  void (async () => {
    let form;
    try {
      form = buildTemplateForm(await ctx.api.getTemplate(name));
    } catch (err) {
      container.replaceChildren(renderError(err));
      return;
    }
    const values: Record<string, string> = {};
    for (const field of form.fields) values[field.name] = field.prefill;

    const errorSlot = el("div");
    const submit = el("button", { class: "primary" }, "run experiment");
    const updateSubmit = () => {
      if (canSubmit(form, values)) submit.removeAttribute("disabled");
      else submit.setAttribute("disabled", "1");
      const missing = missingRequired(form, values);
      errorSlot.replaceChildren(
        missing.length
          ? el("p", { class: "field-error" }, `required: ${missing.join(", ")}`)
          : "",
      );
    };

    const fields = form.fields.map((field) => {
      const input = el("input", {
        value: field.prefill,
        name: field.name,
        ...(field.required ? { required: "1" } : {}),
      });
      input.oninput = () => {
        values[field.name] = input.value;
        updateSubmit();
      };
      return el(
        "label",
        { class: "field" },
        el("span", {}, field.name, field.required ? " *" : ""),
        input,
      );
    });

    submit.onclick = async () => {
      if (!canSubmit(form, values)) return; // blocked client-side, no request
      submit.setAttribute("disabled", "1");
      try {
        const record = await ctx.api.createFromTemplate(name, submissionParams(form, values));
        ctx.navigate(`#/experiment/${record.id}`);
      } catch (err) {
        submit.removeAttribute("disabled");
        errorSlot.replaceChildren(renderError(err));
      }
    };

    container.replaceChildren(
      el("h2", {}, `run ${name}`),
      el("form", { class: "template-form", onsubmit: "return false" }, ...fields),
      errorSlot,
      submit,
    );
    updateSubmit();
  })();
}

// -- cluster ---------------------------------------------------------------------------

export function clusterView(ctx: ViewContext): void {
  const container = el("div");
  ctx.root.replaceChildren(container);

  const render = (state: PollState<ClusterSnapshot>) => {
    if (state.error && !state.data) {
      container.replaceChildren(
        banner(state),
        el("p", { class: "empty" }, "no simulated cluster on this server"),
      );
      return;
    }
    const snapshot = state.data;
    if (!snapshot) {
      container.replaceChildren(banner(state));
      return;
    }
    container.replaceChildren(
      banner(state),
      el("h2", {}, `cluster (clock ${snapshot.clock_ms} ms)`),
      el(
        "table",
        { class: "listing" },
        el(
          "thead",
          {},
          el("tr", {}, el("th", {}, "node"), el("th", {}, "capacity"),
             el("th", {}, "allocated"), el("th", {}, "tasks")),
        ),
        el(
          "tbody",
          {},
          ...snapshot.nodes.map((node) =>
            el(
              "tr",
              {},
              el("td", {}, node.node_id),
              el("td", { class: "mono" }, node.capacity),
              el("td", { class: "mono" }, node.allocated),
              el("td", { class: "mono" }, node.running_tasks.join(", ")),
            ),
          ),
        ),
      ),
      el("p", {}, `wait queue: ${snapshot.wait_queue.join(", ") || "(empty)"}`),
    );
  };

  const poller = new Poller(() => ctx.api.clusterSnapshot(), render, ctx.pollIntervalMs);
  ctx.registerPoller(poller);
  poller.start();
}
