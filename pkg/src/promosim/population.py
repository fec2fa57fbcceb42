"""Demographic tables and customer attribute sampling.

Tables are read from a directory of CSV files::

    age_dist.csv        age,mass
    income_by_age.csv   age_band,percentile,gross
    tax_bands.csv       threshold,rate
    ni_bands.csv        threshold,rate
    expenditure.csv     decile,category,annual_gbp
    decile_bounds.csv   decile,gross_lo
    score_by_age.csv    age_band,score_lo,score_hi,mass
    creditable.txt      one category per line

Age bands are written ``lo-hi`` (inclusive) or ``lo+``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

MASS_TOL = 1e-9

AVALANCHE, ANTI_AVALANCHE, RANDOM = 0, 1, 2
STRATEGY_NAMES = ("avalanche", "anti-avalanche", "random")
DEFAULT_STRATEGY_MIX = (0.15, 0.10, 0.75)

TABLE_FILES = (
    "age_dist.csv",
    "income_by_age.csv",
    "tax_bands.csv",
    "ni_bands.csv",
    "expenditure.csv",
    "decile_bounds.csv",
    "score_by_age.csv",
    "creditable.txt",
)


class TableError(ValueError):
    """A demographic table is missing or fails validation."""


class SamplingError(ValueError):
    """Raised when an attribute cannot be drawn from the tables."""


@dataclass(frozen=True)
class AgeBand:
    label: str
    lo: int
    hi: int

    @classmethod
    def parse(cls, label: str) -> "AgeBand":
        text = label.strip()
        if text.endswith("+"):
            return cls(text, int(text[:-1]), 10**6)
        lo, _, hi = text.partition("-")
        return cls(text, int(lo), int(hi))

    def __contains__(self, age) -> bool:
        return self.lo <= age <= self.hi


@dataclass(frozen=True)
class DemographicTables:
    """Validated distribution tables used to draw customer attributes."""

    ages: np.ndarray
    age_mass: np.ndarray
    income_bands: tuple[AgeBand, ...]
    income_percentiles: tuple[np.ndarray, ...]
    income_gross: tuple[np.ndarray, ...]
    tax_bands: tuple[tuple[float, float], ...]
    ni_bands: tuple[tuple[float, float], ...]
    decile_lo: np.ndarray
    categories: tuple[str, ...]
    # shape (n_deciles, n_categories), annual GBP
    expenditure: np.ndarray
    creditable_categories: frozenset[str]
    score_bands: tuple[AgeBand, ...]
    score_ranges: tuple[np.ndarray, ...]
    score_mass: tuple[np.ndarray, ...]

    def validate(self) -> None:
        check_mass(self.age_mass, "age_dist.csv:mass")
        for band, mass in zip(self.score_bands, self.score_mass):
            check_mass(mass, f"score_by_age.csv:mass[{band.label}]")
        for name, bands in (("tax_bands.csv", self.tax_bands), ("ni_bands.csv", self.ni_bands)):
            thresholds = [b[0] for b in bands]
            if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
                raise TableError(f"{name}: thresholds must be strictly increasing")
            if any(not 0.0 <= r <= 1.0 for _, r in bands):
                raise TableError(f"{name}: rates must lie in [0, 1]")
        missing = self.creditable_categories - set(self.categories)
        if missing:
            raise TableError(
                f"creditable.txt names categories absent from expenditure.csv: {sorted(missing)}"
            )
        for band, pct, gross in zip(self.income_bands, self.income_percentiles, self.income_gross):
            if np.any(np.diff(pct) <= 0) or pct[0] < 0 or pct[-1] > 1:
                raise TableError(f"income_by_age.csv: percentiles for {band.label} must increase within [0, 1]")
            if np.any(np.diff(gross) < 0) or gross[0] < 0:
                raise TableError(f"income_by_age.csv: gross for {band.label} must be non-decreasing")
        if np.any(np.diff(self.decile_lo) <= 0):
            raise TableError("decile_bounds.csv: gross_lo must be strictly increasing")
        if self.expenditure.shape[0] != len(self.decile_lo):
            raise TableError("expenditure.csv and decile_bounds.csv disagree on the number of deciles")
        if np.any(self.expenditure < 0):
            raise TableError("expenditure.csv: annual_gbp must be non-negative")
        for band, ranges in zip(self.score_bands, self.score_ranges):
            if np.any(ranges[:, 0] > ranges[:, 1]) or ranges.min() < 300 or ranges.max() > 850:
                raise TableError(f"score_by_age.csv: bad score range in {band.label}")

    @property
    def creditable_mask(self) -> np.ndarray:
        return np.array([c in self.creditable_categories for c in self.categories])


@dataclass(frozen=True)
class CustomerAttributes:
    age: int
    gross_income: float
    net_income: float
    total_expenditure: float
    creditable_expenditure: float
    credit_score: int
    repayment_strategy: str


def check_mass(mass: np.ndarray, column: str) -> None:
    total = float(np.sum(mass))
    if abs(total - 1.0) > MASS_TOL or np.any(np.asarray(mass) < 0):
        raise TableError(f"{column}: probability mass sums to {total!r}, expected 1")


def _read_csv(path: Path, columns: list[str]) -> list[dict[str, str]]:
    if not path.exists():
        raise TableError(f"missing table file: {path.name} (looked in {path.parent})")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        absent = [c for c in columns if c not in (reader.fieldnames or [])]
        if absent:
            raise TableError(f"{path.name}: missing columns {absent}")
        return list(reader)


def _group(rows, key):
    groups: dict[str, list] = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    return groups


def bundled_tables_path() -> Path:
    return Path(str(resources.files("promosim") / "data" / "tables"))


def load_tables(path: str | Path | None = None) -> DemographicTables:
    """Read and validate a table directory; ``None`` selects the bundled set."""
    root = Path(path) if path is not None else bundled_tables_path()
    if not root.is_dir():
        raise TableError(f"table directory does not exist: {root}")

    age_rows = _read_csv(root / "age_dist.csv", ["age", "mass"])
    ages = np.array([int(r["age"]) for r in age_rows], dtype=np.int64)
    age_mass = np.array([float(r["mass"]) for r in age_rows])

    inc_rows = _read_csv(root / "income_by_age.csv", ["age_band", "percentile", "gross"])
    bands, pcts, grosses = [], [], []
    for label, rows in _group(inc_rows, "age_band").items():
        rows = sorted(rows, key=lambda r: float(r["percentile"]))
        bands.append(AgeBand.parse(label))
        pcts.append(np.array([float(r["percentile"]) for r in rows]))
        grosses.append(np.array([float(r["gross"]) for r in rows]))

    def bands_of(name):
        rows = _read_csv(root / name, ["threshold", "rate"])
        return tuple((float(r["threshold"]), float(r["rate"])) for r in rows)

    dec_rows = _read_csv(root / "decile_bounds.csv", ["decile", "gross_lo"])
    dec_rows.sort(key=lambda r: int(r["decile"]))
    deciles = [int(r["decile"]) for r in dec_rows]
    decile_lo = np.array([float(r["gross_lo"]) for r in dec_rows])

    exp_rows = _read_csv(root / "expenditure.csv", ["decile", "category", "annual_gbp"])
    categories: list[str] = []
    for r in exp_rows:
        if r["category"] not in categories:
            categories.append(r["category"])
    expenditure = np.zeros((len(deciles), len(categories)))
    dec_index = {d: i for i, d in enumerate(deciles)}
    for r in exp_rows:
        d = int(r["decile"])
        if d not in dec_index:
            raise TableError(f"expenditure.csv: decile {d} has no row in decile_bounds.csv")
        expenditure[dec_index[d], categories.index(r["category"])] += float(r["annual_gbp"])

    cred_path = root / "creditable.txt"
    if not cred_path.exists():
        raise TableError(f"missing table file: creditable.txt (looked in {root})")
    creditable = frozenset(
        line.strip() for line in cred_path.read_text(encoding="utf-8").splitlines() if line.strip()
    )

    sc_rows = _read_csv(root / "score_by_age.csv", ["age_band", "score_lo", "score_hi", "mass"])
    s_bands, s_ranges, s_mass = [], [], []
    for label, rows in _group(sc_rows, "age_band").items():
        s_bands.append(AgeBand.parse(label))
        s_ranges.append(np.array([[int(r["score_lo"]), int(r["score_hi"])] for r in rows], dtype=np.int64))
        s_mass.append(np.array([float(r["mass"]) for r in rows]))

    tables = DemographicTables(
        ages=ages,
        age_mass=age_mass,
        income_bands=tuple(bands),
        income_percentiles=tuple(pcts),
        income_gross=tuple(grosses),
        tax_bands=bands_of("tax_bands.csv"),
        ni_bands=bands_of("ni_bands.csv"),
        decile_lo=decile_lo,
        categories=tuple(categories),
        expenditure=expenditure,
        creditable_categories=creditable,
        score_bands=tuple(s_bands),
        score_ranges=tuple(s_ranges),
        score_mass=tuple(s_mass),
    )
    tables.validate()
    return tables


def marginal_tax(gross: float, bands) -> float:
    """Tax owed when each band's rate applies only above its threshold."""
    owed = 0.0
    for k, (threshold, rate) in enumerate(bands):
        upper = bands[k + 1][0] if k + 1 < len(bands) else np.inf
        if gross <= threshold:
            break
        owed += rate * (min(gross, upper) - threshold)
    return owed


def net_income(gross: float, tax_bands, ni_bands) -> float:
    return gross - marginal_tax(gross, tax_bands) - marginal_tax(gross, ni_bands)


def _band_index(bands: tuple[AgeBand, ...], age: int, table: str) -> int:
    for k, band in enumerate(bands):
        if age in band:
            return k
    raise SamplingError(f"age {age} is not covered by any band in {table}")


def sample_population(
    tables: DemographicTables,
    rng: np.random.Generator,
    n: int,
    fixed_age: int | None = None,
    strategy_mix=DEFAULT_STRATEGY_MIX,
) -> dict[str, np.ndarray]:
    """Draw ``n`` customers; returns a dict of column arrays.

    Consumes exactly one ``rng.random((5, n))`` call so the stream position
    depends only on ``n``.
    """
    u = rng.random((5, n))
    if fixed_age is None:
        cdf = np.cumsum(tables.age_mass)
        idx = np.minimum(np.searchsorted(cdf, u[0] * cdf[-1], side="right"), len(cdf) - 1)
        age = tables.ages[idx]
    else:
        age = np.full(n, int(fixed_age), dtype=np.int64)

    gross = np.empty(n)
    score = np.empty(n, dtype=np.int64)
    for a in np.unique(age):
        sel = age == a
        k = _band_index(tables.income_bands, int(a), "income_by_age.csv")
        gross[sel] = np.interp(u[1, sel], tables.income_percentiles[k], tables.income_gross[k])
        s = _band_index(tables.score_bands, int(a), "score_by_age.csv")
        cdf = np.cumsum(tables.score_mass[s])
        r = np.minimum(np.searchsorted(cdf, u[2, sel] * cdf[-1], side="right"), len(cdf) - 1)
        lo, hi = tables.score_ranges[s][r, 0], tables.score_ranges[s][r, 1]
        score[sel] = lo + np.minimum(np.floor(u[3, sel] * (hi - lo + 1)).astype(np.int64), hi - lo)

    net = np.array([net_income(g, tables.tax_bands, tables.ni_bands) for g in gross])
    decile = np.clip(np.searchsorted(tables.decile_lo, gross, side="right") - 1, 0, len(tables.decile_lo) - 1)
    total = tables.expenditure.sum(axis=1)[decile]
    cred = tables.expenditure[:, tables.creditable_mask].sum(axis=1)[decile]

    mix_cdf = np.cumsum(strategy_mix)
    strategy = np.minimum(np.searchsorted(mix_cdf, u[4] * mix_cdf[-1], side="right"), 2).astype(np.int8)
    return {
        "age": age,
        "gross_income": gross,
        "net_income": net,
        "total_expenditure": total,
        "creditable_expenditure": cred,
        "credit_score": score,
        "strategy": strategy,
    }


def sample_customer(
    tables: DemographicTables,
    rng: np.random.Generator,
    fixed_age: int | None = None,
    strategy_mix=DEFAULT_STRATEGY_MIX,
) -> CustomerAttributes:
    cols = sample_population(tables, rng, 1, fixed_age, strategy_mix)
    return CustomerAttributes(
        age=int(cols["age"][0]),
        gross_income=float(cols["gross_income"][0]),
        net_income=float(cols["net_income"][0]),
        total_expenditure=float(cols["total_expenditure"][0]),
        creditable_expenditure=float(cols["creditable_expenditure"][0]),
        credit_score=int(cols["credit_score"][0]),
        repayment_strategy=STRATEGY_NAMES[int(cols["strategy"][0])],
    )
