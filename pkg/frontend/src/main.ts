/**
 * Mounts the console: a 1 s polling loop plus event delegation for the
 * steering controls. All state lives in the controller; a reload simply
 * reconstructs everything from the API.
 */

import { ApiClient } from "./api.js";
import { renderConsole } from "./render.js";
import { ConsoleController } from "./state.js";

const POLL_INTERVAL_MS = 1000;

function mount(root: HTMLElement): void {
  const controller = new ConsoleController(new ApiClient());

  const redraw = () => {
    root.innerHTML = renderConsole(controller.state);
  };

  root.addEventListener("change", async (ev) => {
    const el = ev.target as HTMLElement;
    if (el instanceof HTMLSelectElement && el.dataset.action === "priority") {
      await controller.setPriority(Number(el.dataset.dataset), el.value);
      redraw();
    }
  });

  root.addEventListener("click", async (ev) => {
    const el = (ev.target as HTMLElement).closest("[data-action]");
    if (!(el instanceof HTMLElement)) return;
    const planId = Number(
      (document.getElementById("plan-id") as HTMLInputElement)?.value || 1,
    );
    switch (el.dataset.action) {
      case "run":
        await controller.runPlan(planId);
        break;
      case "pause":
        await controller.pausePlan(planId);
        break;
      case "retry": {
        const field = document.getElementById(
          "derivation-id",
        ) as HTMLInputElement;
        if (field?.value) await controller.retryDerivation(Number(field.value));
        break;
      }
      case "load-validation": {
        const field = document.getElementById(
          "validation-id",
        ) as HTMLInputElement;
        if (field?.value) await controller.loadValidation(Number(field.value));
        break;
      }
      default:
        return;
    }
    redraw();
  });

  const tick = async () => {
    await controller.poll();
    redraw();
  };
  tick();
  setInterval(tick, POLL_INTERVAL_MS);
}

const root = document.getElementById("console-root");
if (root) mount(root);
