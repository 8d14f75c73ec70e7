/** UI state machine, free of DOM so it can be driven by tests.
 *
 * Every displayed number comes from a server response: nudges update the
 * readout only from the acknowledged state, and overlays are re-fetched
 * after the acknowledgment. Mutations are serialized (one in flight);
 * renders carry a token so stale responses never overwrite newer ones.
 */

import { AlignApi, CommitResult, SessionState } from "./api.js";

export type ConnectionStatus = "connecting" | "ready" | "error";

export interface UiSessionModel {
  status: ConnectionStatus;
  keyframes: number;
  selected: number;
  params: number[];
  step: { mm: number; rad: number };
  opacity: number;
  lastError: string | null;
  lastCommit: CommitResult | null;
}

/** Rendering sink the controller drives; the DOM layer implements it. */
export interface View {
  showModel(model: UiSessionModel): void;
  showOverlay(image: Blob): void;
}

const AXES = 6;

export class AlignController {
  readonly model: UiSessionModel = {
    status: "connecting",
    keyframes: 0,
    selected: 0,
    params: new Array(AXES).fill(0),
    step: { mm: 0.5, rad: 0.005 },
    opacity: 0.5,
    lastError: null,
    lastCommit: null,
  };

  private mutationChain: Promise<void> = Promise.resolve();
  private renderToken = 0;
  private renderMode = "edge-overlay";

  constructor(
    private readonly api: AlignApi,
    private readonly view: View,
  ) {}

  /** Fetch the session and the first keyframe's overlay. */
  async load(): Promise<void> {
    this.model.status = "connecting";
    this.view.showModel(this.model);
    try {
      const state = await this.api.session();
      this.applyState(state);
      this.model.status = "ready";
      this.model.lastError = null;
      this.view.showModel(this.model);
      await this.refreshOverlay();
    } catch (err) {
      this.model.status = "error";
      this.model.lastError = String(err);
      this.view.showModel(this.model);
    }
  }

  selectKeyframe(index: number): Promise<void> {
    if (index < 0 || index >= this.model.keyframes) return Promise.resolve();
    this.model.selected = index;
    this.view.showModel(this.model);
    return this.refreshOverlay();
  }

  setRenderMode(mode: string): Promise<void> {
    this.renderMode = mode;
    return this.refreshOverlay();
  }

  /** Translate a key press into a nudge; unknown keys are ignored. */
  handleKey(key: string): Promise<void> {
    const delta = deltaForKey(key, this.model.step);
    if (!delta) return Promise.resolve();
    return this.nudge(delta);
  }

  /** Queue one additive nudge; resolves after ack + overlay refresh. */
  nudge(delta: number[]): Promise<void> {
    const run = async () => {
      try {
        const state = await this.api.nudge(delta);
        this.applyState(state);
        this.model.lastError = null;
        this.view.showModel(this.model);
        await this.refreshOverlay();
      } catch (err) {
        // rejected nudge: readout unchanged, show a brief notice
        this.model.lastError = String(err);
        this.view.showModel(this.model);
      }
    };
    this.mutationChain = this.mutationChain.then(run);
    return this.mutationChain;
  }

  setOpacity(value: number): Promise<void> {
    const run = async () => {
      try {
        const state = await this.api.setOpacity(value);
        this.applyState(state);
        this.view.showModel(this.model);
        await this.refreshOverlay();
      } catch (err) {
        this.model.lastError = String(err);
        this.view.showModel(this.model);
      }
    };
    this.mutationChain = this.mutationChain.then(run);
    return this.mutationChain;
  }

  /** Commit the composed initial transform; idempotent on the server. */
  commit(): Promise<void> {
    const run = async () => {
      try {
        this.model.lastCommit = await this.api.commit();
        this.model.lastError = null;
      } catch (err) {
        this.model.lastError = String(err);
      }
      this.view.showModel(this.model);
    };
    this.mutationChain = this.mutationChain.then(run);
    return this.mutationChain;
  }

  private applyState(state: SessionState): void {
    this.model.keyframes = state.keyframes ?? this.model.keyframes;
    this.model.params = [...state.params];
    this.model.step = { ...state.step };
    this.model.opacity = state.opacity;
  }

  private async refreshOverlay(): Promise<void> {
    const token = ++this.renderToken;
    try {
      const image = await this.api.render(this.model.selected, this.renderMode);
      if (token === this.renderToken) {
        this.view.showOverlay(image);
      }
    } catch (err) {
      if (token === this.renderToken) {
        this.model.lastError = String(err);
        this.view.showModel(this.model);
      }
    }
  }
}

/** Key map: arrows/AD = x, WS = y, QE = z; brackets and comma/period
 * rotate about z and x; semicolon/quote about y. */
export function deltaForKey(
  key: string,
  step: { mm: number; rad: number },
): number[] | null {
  const d = new Array(AXES).fill(0);
  switch (key) {
    case "ArrowRight":
    case "d":
      d[3] = step.mm;
      break;
    case "ArrowLeft":
    case "a":
      d[3] = -step.mm;
      break;
    case "ArrowUp":
    case "w":
      d[4] = -step.mm;
      break;
    case "ArrowDown":
    case "s":
      d[4] = step.mm;
      break;
    case "q":
      d[5] = -step.mm;
      break;
    case "e":
      d[5] = step.mm;
      break;
    case "[":
      d[2] = -step.rad;
      break;
    case "]":
      d[2] = step.rad;
      break;
    case ",":
      d[0] = -step.rad;
      break;
    case ".":
      d[0] = step.rad;
      break;
    case ";":
      d[1] = -step.rad;
      break;
    case "'":
      d[1] = step.rad;
      break;
    default:
      return null;
  }
  return d;
}
