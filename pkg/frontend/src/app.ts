/**
 * DOM wiring: parameter panel, center table, slice view, merge slider.
 * All numbers shown come from service responses; the logic lives in the
 * testable modules (api/params/state/render), this file only binds events.
 */

import { ApiClient, ApiError, LatestOnly } from "./api.js";
import {
  DEFAULT_FORM,
  ParamsFormValues,
  fromReportedParams,
  toRequest,
  validateForm,
} from "./params.js";
import {
  legend,
  projectPolylines,
  renderSliceSvg,
  sliceLayers,
  tableModel,
} from "./render.js";
import { SliceAxis, ViewState } from "./state.js";
import type { FeatureResponse } from "./types.js";

const api = new ApiClient();
const state = new ViewState();
const latestSlice = new LatestOnly();
let form: ParamsFormValues = { ...DEFAULT_FORM };

const $ = (id: string) => document.getElementById(id)!;

function toast(message: string, retry?: () => void): void {
  const el = $("toast");
  el.textContent = message;
  el.classList.add("visible");
  if (retry) {
    const btn = document.createElement("button");
    btn.textContent = "retry";
    btn.onclick = () => {
      el.classList.remove("visible");
      retry();
    };
    el.appendChild(btn);
  }
  setTimeout(() => el.classList.remove("visible"), 6000);
}

function renderForm(errors: Record<string, string | undefined> = {}): void {
  const panel = $("params");
  panel.innerHTML = "";
  for (const [name, value] of Object.entries(form)) {
    const row = document.createElement("label");
    row.textContent = name;
    const input = document.createElement("input");
    if (typeof value === "boolean") {
      input.type = "checkbox";
      input.checked = value;
      input.onchange = () => {
        (form as unknown as Record<string, unknown>)[name] = input.checked;
      };
    } else {
      input.value = value;
      input.onchange = () => {
        (form as unknown as Record<string, unknown>)[name] = input.value;
      };
    }
    row.appendChild(input);
    const err = errors[name];
    if (err) {
      const span = document.createElement("span");
      span.className = "error";
      span.textContent = err;
      row.appendChild(span);
    }
    panel.appendChild(row);
  }
  const submit = document.createElement("button");
  submit.id = "submit";
  submit.textContent = "segment";
  submit.onclick = () => void runSegmentation();
  panel.appendChild(submit);
}

async function runSegmentation(): Promise<void> {
  const errors = validateForm(form);
  if (Object.keys(errors).length > 0) {
    renderForm(errors);
    return;
  }
  const submit = $("submit") as HTMLButtonElement;
  submit.disabled = true;
  try {
    const { job_id } = await api.submitSegment(toRequest(form));
    const job = await api.pollJob(job_id, (j) => {
      $("progress").textContent =
        `iteration ${j.progress.iteration}` +
        (j.progress.max_delta != null
          ? `, max center delta ${j.progress.max_delta.toPrecision(3)}`
          : "");
    });
    if (job.status === "failed") {
      toast(`segmentation failed: ${job.error}`);
      return;
    }
    const meta = await api.meta();
    state.setMeta(meta);
    if (meta.params) form = fromReportedParams(meta.params, form);
    renderForm();
    await refreshTable();
  } catch (e) {
    toast(e instanceof ApiError ? e.message : String(e));
  } finally {
    submit.disabled = false;
  }
}

async function refreshTable(): Promise<void> {
  const resp = await api.centers(state.filterParams());
  state.setCenters(resp.centers);
  const model = tableModel(resp, state.selected);
  const table = $("centers");
  table.innerHTML =
    `<tr>${model.columns.map((c) => `<th>${c}</th>`).join("")}</tr>` +
    model.rows
      .map(
        (r) =>
          `<tr data-id="${r.id}" class="${r.selected ? "selected" : ""}">` +
          r.cells.map((c) => `<td>${c}</td>`).join("") +
          "</tr>",
      )
      .join("");
  table.querySelectorAll("tr[data-id]").forEach((tr) => {
    (tr as HTMLElement).onclick = () => {
      state.toggleSelect(Number((tr as HTMLElement).dataset.id));
      void refreshTable();
      void refreshSlice();
    };
  });
  await refreshSlice();
}

async function refreshSlice(): Promise<void> {
  const field = state.meta?.field;
  if (!field) return;
  const result = await latestSlice.run(async () => {
    const payloads: FeatureResponse[] = [];
    for (const id of state.visibleSelection()) {
      payloads.push(
        await api.feature(id, {
          t: state.timestep,
          slice: state.sliceParam(),
          window: state.windowParam(),
        }),
      );
    }
    return payloads;
  });
  if (result === undefined) return; // superseded by a newer request
  const axis = state.sliceAxis;
  const planeDims: [number, number] =
    axis === "z" ? [field.dims[0]!, field.dims[1]!]
    : axis === "y" ? [field.dims[0]!, field.dims[2]!]
    : [field.dims[1]!, field.dims[2]!];
  $("slice").innerHTML = renderSliceSvg(
    sliceLayers(result, axis),
    projectPolylines(result, axis, field),
    planeDims,
  );
  $("legend").innerHTML = legend(result)
    .map(
      (e) =>
        `<span class="swatch" style="background:${e.color}"></span>` +
        `feature ${e.featureId}`,
    )
    .join(" ");
}

async function applyMerge(): Promise<void> {
  try {
    await api.merge(state.epsM);
    await refreshTable();
  } catch (e) {
    toast(e instanceof ApiError ? e.message : String(e),
          () => void applyMerge());
  }
}

function bindControls(): void {
  const field = state.meta?.field;
  const scrubber = $("timestep") as HTMLInputElement;
  scrubber.max = String((field?.times.length ?? 1) - 1);
  scrubber.oninput = () => {
    state.setTimestep(Number(scrubber.value));
    void refreshSlice();
  };
  const axisSel = $("slice-axis") as HTMLSelectElement;
  const idxInput = $("slice-index") as HTMLInputElement;
  const onSlice = () => {
    state.setSlice(axisSel.value as SliceAxis, Number(idxInput.value));
    void refreshSlice();
  };
  axisSel.onchange = onSlice;
  idxInput.oninput = onSlice;
  const lo = $("window-lo") as HTMLInputElement;
  const hi = $("window-hi") as HTMLInputElement;
  const onWindow = () => {
    state.setWindow(Number(lo.value), Number(hi.value));
    void refreshSlice();
  };
  lo.oninput = onWindow;
  hi.oninput = onWindow;
  const epsM = $("eps-m") as HTMLInputElement;
  epsM.onchange = () => {
    state.epsM = Number(epsM.value);
    void applyMerge();
  };
  const hide = $("hide-largest") as HTMLInputElement;
  hide.onchange = () => {
    state.hideLargest = hide.checked;
    void refreshSlice();
  };
}

export async function start(): Promise<void> {
  renderForm();
  try {
    const meta = await api.meta();
    state.setMeta(meta);
    bindControls();
    if (meta.has_segmentation) await refreshTable();
  } catch (e) {
    toast(`service unreachable: ${e instanceof Error ? e.message : e}`);
  }
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  void start();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void start());
}
