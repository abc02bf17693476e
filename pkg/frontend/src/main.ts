/** Browser entry point: wires the console to a DOM node and the service.
 *
 * Kept separate from the state machine and renderers so everything else
 * stays testable in plain node. Event handling uses delegation on the root
 * element because the markup is re-rendered wholesale on each state change.
 */

import { fetchTransport } from "./api";
import { AnnotationConsole } from "./controller";
import { renderConsole } from "./render";
import type { Level } from "./types";

export function boot(root: HTMLElement, baseUrl: string): AnnotationConsole {
  const console_ = new AnnotationConsole(fetchTransport(baseUrl), {
    onChange: (state) => {
      root.innerHTML = renderConsole(state);
    },
  });
  root.innerHTML = renderConsole(console_.state);

  root.addEventListener("click", (event) => {
    const target = event.target;
    if (!(target instanceof HTMLElement)) {
      return;
    }
    const level = target.getAttribute("data-level");
    const pool = target.getAttribute("data-pool");
    if (level !== null && pool !== null) {
      console_.label(Number(pool), level as Level);
      return;
    }
    const action = target.getAttribute("data-action");
    if (action === "submit") {
      void console_.submit();
    } else if (action === "retry") {
      void console_.retry();
    }
  });

  root.addEventListener("submit", (event) => {
    const form = event.target;
    if (!(form instanceof HTMLFormElement)) {
      return;
    }
    if (form.getAttribute("data-action") === "open") {
      event.preventDefault();
      const input = form.elements.namedItem("token");
      if (input instanceof HTMLInputElement && input.value.trim() !== "") {
        void console_.open(input.value.trim());
      }
    }
  });

  return console_;
}

if (typeof document !== "undefined") {
  const root = document.getElementById("console-root");
  if (root !== null) {
    boot(root, location.origin);
  }
}
