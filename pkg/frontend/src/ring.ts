/** Time-bounded sample buffer for the live charts.
 *
 * Keeps at most `horizon` seconds of history behind the newest sample,
 * plus a hard element cap so a burst of bogus timestamps cannot grow the
 * buffer without bound. Samples are expected in nondecreasing time order;
 * a stray out-of-order sample is inserted at its proper place so the
 * rendered trace never zigzags back in time.
 */

export interface TimedSample<T> {
  readonly t: number;
  readonly v: T;
}

export class TimedRing<T> {
  private items: TimedSample<T>[] = [];

  constructor(
    readonly horizonS: number,
    readonly capacity: number = 8192,
  ) {
    if (horizonS <= 0) throw new Error("horizon must be positive");
    if (capacity < 1) throw new Error("capacity must be positive");
  }

  get length(): number {
    return this.items.length;
  }

  get newest(): TimedSample<T> | undefined {
    return this.items[this.items.length - 1];
  }

  push(t: number, v: T): void {
    if (!Number.isFinite(t)) return;
    const n = this.items.length;
    if (n === 0 || t >= this.items[n - 1].t) {
      this.items.push({ t, v });
    } else {
      // rare path: walk back to the insertion point
      let i = n - 1;
      while (i > 0 && this.items[i - 1].t > t) i -= 1;
      this.items.splice(i, 0, { t, v });
    }
    this.prune();
  }

  private prune(): void {
    const last = this.items[this.items.length - 1];
    if (last === undefined) return;
    const floor = last.t - this.horizonS;
    let drop = 0;
    while (drop < this.items.length - 1 && this.items[drop].t < floor) drop += 1;
    const over = this.items.length - drop - this.capacity;
    if (over > 0) drop += over;
    if (drop > 0) this.items.splice(0, drop);
  }

  /** Snapshot in time order. The array is fresh; callers may keep it. */
  toArray(): TimedSample<T>[] {
    return this.items.slice();
  }

  clear(): void {
    this.items = [];
  }
}
