/** Metric comparison math: overlay the same metric key across experiments on
 * a shared step axis. Raw points, no smoothing. Returns SVG path data so the
 * rendering layer stays a one-liner. */

import type { ExperimentRecord } from "./model.js";

export interface Series {
  experimentId: string;
  points: { step: number; value: number }[];
}

export function metricKeys(records: ExperimentRecord[]): string[] {
  const keys = new Set<string>();
  for (const record of records) {
    for (const metric of record.metrics) keys.add(metric.key);
  }
  return [...keys].sort();
}

/** One series per experiment that reported the key, points sorted by step. */
export function overlaySeries(records: ExperimentRecord[], key: string): Series[] {
  const series: Series[] = [];
  for (const record of records) {
    const points = record.metrics
      .filter((m) => m.key === key)
      .map((m) => ({ step: m.step, value: m.value }))
      .sort((a, b) => a.step - b.step);
    if (points.length > 0) series.push({ experimentId: record.id, points });
  }
  return series;
}

export interface ChartGeometry {
  width: number;
  height: number;
  paths: { experimentId: string; d: string }[];
  stepRange: [number, number];
  valueRange: [number, number];
}

export function chartGeometry(
  series: Series[],
  width = 640,
  height = 240,
  pad = 8,
): ChartGeometry {
  const allPoints = series.flatMap((s) => s.points);
  if (allPoints.length === 0) {
    return { width, height, paths: [], stepRange: [0, 1], valueRange: [0, 1] };
  }
  let [minStep, maxStep] = [Infinity, -Infinity];
  let [minValue, maxValue] = [Infinity, -Infinity];
  for (const p of allPoints) {
    minStep = Math.min(minStep, p.step);
    maxStep = Math.max(maxStep, p.step);
    minValue = Math.min(minValue, p.value);
    maxValue = Math.max(maxValue, p.value);
  }
  if (minStep === maxStep) maxStep = minStep + 1;
  if (minValue === maxValue) maxValue = minValue + 1;

  const x = (step: number) =>
    pad + ((step - minStep) / (maxStep - minStep)) * (width - 2 * pad);
  const y = (value: number) =>
    height - pad - ((value - minValue) / (maxValue - minValue)) * (height - 2 * pad);

  const paths = series.map((s) => ({
    experimentId: s.experimentId,
    d: s.points
      .map((p, i) => `${i === 0 ? "M" : "L"}${x(p.step).toFixed(1)},${y(p.value).toFixed(1)}`)
      .join(" "),
  }));
  return {
    width,
    height,
    paths,
    stepRange: [minStep, maxStep],
    valueRange: [minValue, maxValue],
  };
}
