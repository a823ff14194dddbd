"""Regenerates the bundled synthetic OHLCV sample (deterministic)."""
import csv
import datetime as dt
import random

TICKERS = {
    "AAA": (0.0009, 0.022),
    "BBB": (0.0004, 0.011),
    "CCC": (0.0007, 0.018),
    "DDD": (0.0002, 0.009),
    "EEE": (0.0011, 0.028),
}
DAYS = 756


def trading_days(start, n):
    d = start
    out = []
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def main():
    rng = random.Random(20240101)
    days = trading_days(dt.date(2021, 1, 4), DAYS)
    closes = {t: [] for t in TICKERS}
    index = []
    level = {t: 50.0 + 25.0 * i for i, t in enumerate(TICKERS)}
    idx = 1000.0
    for _ in days:
        common = rng.gauss(0.0, 1.0)
        for t, (mu, sigma) in TICKERS.items():
            closes[t].append(level[t])
            z = 0.6 * common + 0.8 * rng.gauss(0.0, 1.0)
            level[t] *= 1.0 + mu + sigma * z
        index.append(idx)
        idx *= 1.0 + 0.0005 + 0.009 * common

    def bar(writer, day, close, prev, ticker, vol):
        o = prev
        hi = max(o, close) * (1.0 + abs(rng.gauss(0.0, 0.004)))
        lo = min(o, close) * (1.0 - abs(rng.gauss(0.0, 0.004)))
        writer.writerow([day.isoformat(), f"{o:.4f}", f"{hi:.4f}", f"{lo:.4f}", f"{close:.4f}", vol, ticker])

    header = ["date", "open", "high", "low", "close", "volume", "ticker"]
    with open("sample_prices.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for t in TICKERS:
            c = [round(x, 4) for x in closes[t]]
            for i, day in enumerate(days):
                bar(w, day, c[i], c[i - 1] if i else c[i], t, rng.randint(100_000, 5_000_000))
    with open("sample_index.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        c = [round(x, 4) for x in index]
        for i, day in enumerate(days):
            bar(w, day, c[i], c[i - 1] if i else c[i], "IDX", 0)


if __name__ == "__main__":
    main()
