/** Countdown used for the per-question time limit. */

export class Countdown {
  private handle: ReturnType<typeof setInterval> | null = null;
  remaining = 0;

  start(seconds: number, onTick: (remaining: number) => void, onExpire: () => void): void {
    this.cancel();
    this.remaining = seconds;
    onTick(this.remaining);
    this.handle = setInterval(() => {
      this.remaining -= 1;
      onTick(this.remaining);
      if (this.remaining <= 0) {
        this.cancel();
        onExpire();
      }
    }, 1000);
  }

  cancel(): void {
    if (this.handle !== null) {
      clearInterval(this.handle);
      this.handle = null;
    }
  }
}

export function formatClock(totalSeconds: number): string {
  const m = Math.floor(Math.max(totalSeconds, 0) / 60);
  const s = Math.max(totalSeconds, 0) % 60;
  return `${m}:${String(s).padStart(2, "0")}`;
}
