/** DOM wiring for the alignment UI. */

import { AlignApi } from "./api.js";
import { AlignController, UiSessionModel, View } from "./controller.js";

const PARAM_LABELS = ["rx (rad)", "ry (rad)", "rz (rad)",
                      "tx (mm)", "ty (mm)", "tz (mm)"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class DomView implements View {
  private overlayUrl: string | null = null;

  showModel(model: UiSessionModel): void {
    const banner = el<HTMLDivElement>("banner");
    if (model.status === "error") {
      banner.textContent = `service unreachable: ${model.lastError ?? ""}`;
      banner.classList.add("visible");
    } else if (model.lastError) {
      banner.textContent = model.lastError;
      banner.classList.add("visible");
    } else {
      banner.classList.remove("visible");
    }

    const readout = el<HTMLTableSectionElement>("readout");
    readout.innerHTML = "";
    model.params.forEach((value, i) => {
      const row = document.createElement("tr");
      row.innerHTML =
        `<td>${PARAM_LABELS[i]}</td><td>${value.toFixed(6)}</td>`;
      readout.appendChild(row);
    });

    const selector = el<HTMLSelectElement>("keyframe");
    if (selector.options.length !== model.keyframes) {
      selector.innerHTML = "";
      for (let i = 0; i < model.keyframes; i++) {
        const opt = document.createElement("option");
        opt.value = String(i);
        opt.textContent = `keyframe ${i}`;
        selector.appendChild(opt);
      }
    }
    selector.value = String(model.selected);
    el<HTMLInputElement>("opacity").value = String(model.opacity);

    const commitInfo = el<HTMLPreElement>("commit-info");
    if (model.lastCommit) {
      const m = model.lastCommit.matrix;
      const rows = [0, 4, 8, 12].map((r) =>
        m.slice(r, r + 4).map((v) => v.toFixed(6)).join("  "));
      commitInfo.textContent =
        `written: ${model.lastCommit.path}\n${rows.join("\n")}`;
    }
  }

  showOverlay(image: Blob): void {
    if (this.overlayUrl) URL.revokeObjectURL(this.overlayUrl);
    this.overlayUrl = URL.createObjectURL(image);
    el<HTMLImageElement>("overlay").src = this.overlayUrl;
  }
}

function bind(): void {
  const api = new AlignApi("");
  const controller = new AlignController(api, new DomView());

  window.addEventListener("keydown", (ev) => {
    if ((ev.target as HTMLElement)?.tagName === "INPUT") return;
    void controller.handleKey(ev.key);
  });
  el<HTMLSelectElement>("keyframe").addEventListener("change", (ev) => {
    void controller.selectKeyframe(
      Number((ev.target as HTMLSelectElement).value));
  });
  el<HTMLSelectElement>("mode").addEventListener("change", (ev) => {
    void controller.setRenderMode((ev.target as HTMLSelectElement).value);
  });
  el<HTMLInputElement>("opacity").addEventListener("change", (ev) => {
    void controller.setOpacity(Number((ev.target as HTMLInputElement).value));
  });
  el<HTMLButtonElement>("commit").addEventListener("click", () => {
    void controller.commit();
  });
  el<HTMLButtonElement>("retry").addEventListener("click", () => {
    void controller.load();
  });

  document.querySelectorAll<HTMLButtonElement>("[data-axis]").forEach((btn) => {
    btn.addEventListener("click", () => {
      const axis = Number(btn.dataset.axis);
      const sign = Number(btn.dataset.sign);
      const step = axis < 3 ? controller.model.step.rad : controller.model.step.mm;
      const delta = new Array(6).fill(0);
      delta[axis] = sign * step;
      void controller.nudge(delta);
    });
  });

  void controller.load();
}

bind();
