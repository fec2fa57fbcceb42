"""Regenerate the bundled synthetic demographic tables.

The numbers are hand-approximated stand-ins for UK 2019/2020 public
statistics (population by single year of age, employee gross pay
percentiles by age band, single-adult household spending by income
decile, credit score bands by age). They share the schema of the real
extracts so that real data can be dropped in unchanged.

Run from the repository root::

    python tools/make_synthetic_tables.py
"""

from __future__ import annotations

import csv
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "promosim" / "data" / "tables"

# thousands of people, ages 18..90 (90 stands for 90 and over)
_AGE_ANCHORS = [
    (18, 740), (20, 790), (22, 850), (25, 890), (30, 910), (35, 880),
    (40, 840), (45, 860), (50, 910), (55, 900), (60, 800), (65, 700),
    (70, 690), (75, 540), (80, 390), (85, 260), (89, 170), (90, 600),
]

_INCOME_PERCENTILES = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 1.0]
_INCOME_BY_AGE = {
    "18-21": [1000, 2000, 3200, 4600, 6400, 8600, 11000, 13800, 16600, 20000, 30000, 45000],
    "22-29": [1500, 7000, 13000, 17500, 20500, 23000, 25500, 28000, 31500, 37500, 60000, 100000],
    "30-39": [1500, 8500, 15500, 21000, 25500, 29500, 33500, 38000, 44500, 55000, 100000, 180000],
    "40-49": [1500, 8500, 15000, 20500, 25500, 30000, 35000, 40500, 48500, 63000, 125000, 250000],
    "50-59": [1500, 8000, 13500, 18500, 23000, 27500, 32000, 37000, 44500, 58000, 115000, 250000],
    "60+": [1000, 4500, 7500, 10500, 14000, 17500, 21500, 26000, 32500, 43500, 90000, 200000],
}

# 2019/20 income tax with the personal-allowance taper folded into marginal bands
_TAX = [(0, 0.0), (12500, 0.2), (50000, 0.4), (100000, 0.6), (125000, 0.4), (150000, 0.45)]
_NI = [(0, 0.0), (8632, 0.12), (50000, 0.02)]

# lower gross-income bound of each decile
_DECILE_LO = [0, 5500, 10000, 14000, 18000, 22000, 26500, 31500, 38500, 50000]

# weekly all-household spend by gross income decile; scaled to a one-adult household
_SINGLE_ADULT_SCALE = 0.44
_WEEKLY = {
    "Food and non-alcoholic drinks": [40, 48, 53, 58, 64, 69, 72, 79, 84, 98],
    "Alcoholic drink, tobacco and narcotics": [8, 9, 10, 11, 12, 13, 13, 15, 15, 18],
    "Clothing and footwear": [8, 10, 13, 16, 20, 23, 27, 30, 38, 56],
    "Housing (net), fuel and power": [70, 72, 75, 80, 85, 90, 93, 96, 105, 128],
    "Household goods and services": [15, 18, 23, 27, 32, 36, 40, 45, 55, 80],
    "Health": [3, 5, 5, 6, 7, 8, 9, 10, 12, 18],
    "Transport": [22, 30, 45, 55, 72, 85, 95, 110, 128, 175],
    "Communication": [14, 17, 19, 21, 23, 25, 26, 28, 30, 33],
    "Recreation and culture": [30, 40, 52, 60, 70, 80, 90, 100, 115, 150],
    "Education": [2, 2, 3, 3, 4, 6, 7, 9, 12, 35],
    "Restaurants and hotels": [17, 22, 27, 32, 40, 47, 52, 60, 72, 100],
    "Miscellaneous goods and services": [20, 25, 32, 37, 43, 50, 55, 62, 70, 95],
    "Other expenditure items": [30, 35, 45, 55, 65, 80, 95, 110, 135, 190],
}
_NON_CREDITABLE = {
    "Housing (net), fuel and power",
    "Household goods and services",
    "Other expenditure items",
}

_SCORE_RANGES = [(300, 579), (580, 669), (670, 739), (740, 799), (800, 850)]
_SCORE_BY_AGE = {
    "18-24": [0.20, 0.27, 0.28, 0.19, 0.06],
    "25-39": [0.18, 0.23, 0.25, 0.22, 0.12],
    "40-54": [0.16, 0.19, 0.22, 0.23, 0.20],
    "55-73": [0.09, 0.13, 0.19, 0.25, 0.34],
    "74+": [0.05, 0.10, 0.17, 0.25, 0.43],
}


def _age_masses() -> list[tuple[int, float]]:
    counts = {}
    for (a0, c0), (a1, c1) in zip(_AGE_ANCHORS, _AGE_ANCHORS[1:]):
        for age in range(a0, a1):
            counts[age] = c0 + (c1 - c0) * (age - a0) / (a1 - a0)
    counts[_AGE_ANCHORS[-1][0]] = _AGE_ANCHORS[-1][1]
    total = sum(counts.values())
    return [(age, c / total) for age, c in sorted(counts.items())]


def _write(name: str, header: list[str], rows) -> None:
    with open(OUT / name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    _write("age_dist.csv", ["age", "mass"], [(a, repr(m)) for a, m in _age_masses()])
    _write(
        "income_by_age.csv",
        ["age_band", "percentile", "gross"],
        [(band, p, g) for band, vals in _INCOME_BY_AGE.items()
         for p, g in zip(_INCOME_PERCENTILES, vals)],
    )
    _write("tax_bands.csv", ["threshold", "rate"], _TAX)
    _write("ni_bands.csv", ["threshold", "rate"], _NI)
    _write("decile_bounds.csv", ["decile", "gross_lo"], [(i + 1, lo) for i, lo in enumerate(_DECILE_LO)])
    _write(
        "expenditure.csv",
        ["decile", "category", "annual_gbp"],
        [(d + 1, cat, round(w[d] * _SINGLE_ADULT_SCALE * 52, 2))
         for d in range(10) for cat, w in _WEEKLY.items()],
    )
    _write(
        "score_by_age.csv",
        ["age_band", "score_lo", "score_hi", "mass"],
        [(band, lo, hi, m) for band, masses in _SCORE_BY_AGE.items()
         for (lo, hi), m in zip(_SCORE_RANGES, masses)],
    )
    with open(OUT / "creditable.txt", "w", encoding="utf-8") as fh:
        for cat in _WEEKLY:
            if cat not in _NON_CREDITABLE:
                fh.write(cat + "\n")


if __name__ == "__main__":
    main()
