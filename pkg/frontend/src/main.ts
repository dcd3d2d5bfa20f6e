/** App shell: settings, hash routing, one live poller per view. */

import { ApiClient, loadSettings, saveSettings, Settings } from "./api.js";
import {
  clusterView,
  compareView,
  dashboardView,
  el,
  experimentView,
  templateFormView,
  templatesView,
  ViewContext,
} from "./views.js";

const POLL_INTERVAL_MS = 2000;

function settingsPanel(settings: Settings, onSave: (s: Settings) => void): HTMLElement {
  const server = el("input", { value: settings.server, placeholder: "http://127.0.0.1:8000 (blank = same origin)" });
  const token = el("input", { value: settings.token, type: "password", placeholder: "bearer token (blank = insecure server)" });
  const save = el("button", { class: "primary" }, "save");
  save.onclick = () => onSave({ server: server.value.trim().replace(/\/$/, ""), token: token.value.trim() });
  return el(
    "div",
    { class: "settings" },
    el("h2", {}, "settings"),
    el("label", { class: "field" }, el("span", {}, "server"), server),
    el("label", { class: "field" }, el("span", {}, "token"), token),
    save,
  );
}

function nav(): HTMLElement {
  return el(
    "nav",
    {},
    el("a", { href: "#/dashboard" }, "dashboard"),
    el("a", { href: "#/templates" }, "templates"),
    el("a", { href: "#/cluster" }, "cluster"),
    el("a", { href: "#/settings" }, "settings"),
  );
}

export function startApp(root: HTMLElement, storage: Storage = window.localStorage): void {
  let settings = loadSettings(storage);
  let activePoller: { stop(): void } | null = null;

  const content = el("main");
  root.replaceChildren(el("header", {}, el("h1", {}, "controltower workbench"), nav()), content);

  const route = () => {
    activePoller?.stop();
    activePoller = null;
    const api = new ApiClient(settings);
    const ctx: ViewContext = {
      api,
      root: content,
      pollIntervalMs: POLL_INTERVAL_MS,
      navigate: (hash) => {
        window.location.hash = hash;
      },
      registerPoller: (poller) => {
        activePoller = poller;
      },
    };
    const hash = window.location.hash || "#/dashboard";
    const [, view, ...rest] = hash.split("/");
    if (view === "experiment" && rest[0]) experimentView(ctx, rest[0]);
    else if (view === "compare" && rest[0]) compareView(ctx, rest[0].split(","));
    else if (view === "templates") templatesView(ctx);
    else if (view === "template" && rest[0]) templateFormView(ctx, rest[0]);
    else if (view === "cluster") clusterView(ctx);
    else if (view === "settings")
      content.replaceChildren(
        settingsPanel(settings, (next) => {
          settings = next;
          saveSettings(storage, next);
          window.location.hash = "#/dashboard";
        }),
      );
    else dashboardView(ctx);
  };

  window.addEventListener("hashchange", route);
  route();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  startApp(document.getElementById("app") as HTMLElement);
}
