/** Client view state: mirrors the session's forward-only workflow. */

export type Step = 1 | 2 | 3;

export interface OverlayToggles {
  prediction: boolean;
  regions: boolean;
  heatmap: boolean;
  groundTruth: boolean;
}

export const MIN_BRUSH = 1;
export const MAX_BRUSH = 32;

export class ViewState {
  step: Step = 1;
  activeExpert = 1;
  brushRadius = 3;
  eraser = false;
  toggles: OverlayToggles = {
    prediction: true,
    regions: true,
    heatmap: false,
    groundTruth: false,
  };

  constructor(
    readonly sessionId: string,
    readonly expertCount: number,
  ) {
    if (expertCount < 1) throw new RangeError("need at least one expert");
  }

  setActiveExpert(expert: number): void {
    if (!Number.isInteger(expert) || expert < 1 || expert > this.expertCount) {
      throw new RangeError(`expert must lie in 1..${this.expertCount}`);
    }
    this.activeExpert = expert;
  }

  setBrushRadius(radius: number): void {
    this.brushRadius = Math.min(MAX_BRUSH, Math.max(MIN_BRUSH, Math.round(radius)));
  }

  toggle(layer: keyof OverlayToggles): void {
    this.toggles[layer] = !this.toggles[layer];
  }

  /** Step 1 -> 2: annotation starts once the assignment view was seen. */
  beginAnnotation(): void {
    if (this.step !== 1) throw new Error(`cannot begin annotation from step ${this.step}`);
    this.step = 2;
  }

  /** Step 2 -> 3: only after the service confirmed the fuse. */
  showFusion(): void {
    if (this.step !== 2) throw new Error(`cannot show fusion from step ${this.step}`);
    this.step = 3;
  }
}
