/**
 * DOM-free view models: layer stacks, the expert legend, and metric tables.
 * Everything renders from service payloads; the client never re-infers.
 */
import { FuseMetrics, FuseResult, SessionSummary } from "./api.js";
import { decodeGrid, Grid } from "./rle.js";

export const EXPERT_COLORS = [
  "#e4572e", "#17bebb", "#ffc914", "#76b041", "#b95f89", "#5b5f97", "#ff9f1c",
];

export function expertColor(expert: number): string {
  return EXPERT_COLORS[(expert - 1) % EXPERT_COLORS.length];
}

export interface LegendEntry {
  expert: number; // 0 = model region
  color: string;
  label: string;
}

export function legend(expertCount: number): LegendEntry[] {
  const entries: LegendEntry[] = [
    { expert: 0, color: "#9aa0a6", label: "model region" },
  ];
  for (let j = 1; j <= expertCount; j++) {
    entries.push({ expert: j, color: expertColor(j), label: `expert ${j} region` });
  }
  return entries;
}

export interface Layer {
  kind: "prediction" | "region" | "heatmap" | "truth";
  label: string;
  expert?: number;
  color: string;
  grid: Grid;
  visible: boolean;
  alpha: number;
}

export interface SessionGrids {
  prediction: Grid;
  modelRegion: Grid;
  regions: Grid[]; // index j-1 -> expert j
  heatmap: Grid; // 0..255 quantized
  truth: Grid | null;
}

export function decodeSession(session: SessionSummary, truth: Grid | null = null): SessionGrids {
  return {
    prediction: decodeGrid(session.base_prediction),
    modelRegion: decodeGrid(session.model_region),
    regions: session.regions.map((r) => decodeGrid(r.mask)),
    heatmap: decodeGrid(session.heatmap),
    truth,
  };
}

export interface OverlayFlags {
  prediction: boolean;
  regions: boolean;
  heatmap: boolean;
  groundTruth: boolean;
}

/** Ordered overlay stack; all layers must be pixel-aligned. */
export function buildLayerStack(grids: SessionGrids, toggles: OverlayFlags): Layer[] {
  const base = grids.prediction;
  const layers: Layer[] = [
    {
      kind: "prediction", label: "model prediction", color: "#ffffff",
      grid: grids.prediction, visible: toggles.prediction, alpha: 0.55,
    },
  ];
  grids.regions.forEach((grid, i) => {
    layers.push({
      kind: "region", label: `expert ${i + 1} region`, expert: i + 1,
      color: expertColor(i + 1), grid, visible: toggles.regions, alpha: 0.4,
    });
  });
  layers.push({
    kind: "heatmap", label: "deferral heatmap", color: "#ff8800",
    grid: grids.heatmap, visible: toggles.heatmap, alpha: 0.6,
  });
  if (grids.truth) {
    layers.push({
      kind: "truth", label: "ground truth", color: "#00e676",
      grid: grids.truth, visible: toggles.groundTruth, alpha: 0.45,
    });
  }
  for (const layer of layers) {
    if (!layer.grid.sameShape(base)) {
      throw new Error(`layer ${layer.label} is not pixel-aligned with the base`);
    }
  }
  return layers;
}

export function formatMetric(value: number | null | undefined): string {
  if (value === null || value === undefined) return "n/a";
  return value.toFixed(2);
}

export interface MetricRow {
  branch: string;
  dsc: string;
  jaccard: string;
  sensitivity: string;
  pixels: number;
}

export function metricRows(metrics: FuseMetrics): MetricRow[] {
  return (["system", "expert", "model"] as const).map((branch) => ({
    branch,
    dsc: formatMetric(metrics[branch].dsc),
    jaccard: formatMetric(metrics[branch].jaccard),
    sensitivity: formatMetric(metrics[branch].sensitivity),
    pixels: metrics[branch].pixels,
  }));
}

export function displayedSystemDsc(fused: FuseResult): string {
  if (!fused.metrics) return "n/a";
  return formatMetric(fused.metrics.system.dsc);
}

export interface FusionView {
  fusedMask: Grid;
  source: Grid;
  truth: Grid | null;
  notice: string | null; // "no reference" when ground truth is absent
  rows: MetricRow[] | null;
  systemDsc: string;
}

export function fusionView(fused: FuseResult, truth: Grid | null): FusionView {
  return {
    fusedMask: decodeGrid(fused.system_mask),
    source: decodeGrid(fused.source),
    truth,
    notice: fused.metrics ? null : "no reference mask attached to this session",
    rows: fused.metrics ? metricRows(fused.metrics) : null,
    systemDsc: displayedSystemDsc(fused),
  };
}
