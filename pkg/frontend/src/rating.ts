// Five-star rating widget. Disabled until the answer's done event arrives;
// a click posts the rating and, on failure, reverts to the previous state.

export interface RatingWidget {
  element: HTMLElement;
  enable: () => void;
}

export function createRatingWidget(onRate: (rating: number) => Promise<void>): RatingWidget {
  const element = document.createElement("div");
  element.className = "rating";
  element.dataset.state = "disabled";
  element.dataset.rating = "";

  const buttons: HTMLButtonElement[] = [];
  let current: number | null = null;
  let enabled = false;

  const paint = (value: number | null): void => {
    element.dataset.rating = value === null ? "" : String(value);
    buttons.forEach((button, i) => {
      button.classList.toggle("selected", value !== null && i < value);
    });
  };

  for (let rating = 1; rating <= 5; rating++) {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "star";
    button.dataset.rating = String(rating);
    button.textContent = "★";
    button.disabled = true;
    button.addEventListener("click", () => {
      if (!enabled) return;
      const previous = current;
      paint(rating);
      element.dataset.state = "saving";
      onRate(rating)
        .then(() => {
          current = rating;
          element.dataset.state = "confirmed";
        })
        .catch(() => {
          paint(previous);
          element.dataset.state = previous === null ? "enabled" : "confirmed";
        });
    });
    buttons.push(button);
    element.appendChild(button);
  }

  return {
    element,
    enable: () => {
      enabled = true;
      element.dataset.state = "enabled";
      buttons.forEach((button) => {
        button.disabled = false;
      });
    },
  };
}
