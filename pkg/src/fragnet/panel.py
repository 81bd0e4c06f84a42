"""Bank-level exposure panel: data model, CSV round-trip, synthetic generation.

A panel holds, per observation year, one record per bank with its country-level
exposure vector. The CSV layout is long form, one row per (bank,
counterparty-country) pair with the bank-level fields repeated:

    year,lei,name,country,total_assets,capital,exposure_country,exposure_amount

Amounts are million EUR stored as float64. A companion ``<stem>.manifest.json``
lists the years and expected bank counts; when present it is checked on load.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, InputError

CSV_HEADER = [
    "year",
    "lei",
    "name",
    "country",
    "total_assets",
    "capital",
    "exposure_country",
    "exposure_amount",
]

# ISO 3166-1 alpha-2 assigned codes. Unknown codes are kept with a warning
# because the sample's country roster shifts between years.
ISO_ALPHA2 = frozenset(
    """
    AD AE AF AG AI AL AM AO AQ AR AS AT AU AW AX AZ BA BB BD BE BF BG BH BI BJ
    BL BM BN BO BQ BR BS BT BV BW BY BZ CA CC CD CF CG CH CI CK CL CM CN CO CR
    CU CV CW CX CY CZ DE DJ DK DM DO DZ EC EE EG EH ER ES ET FI FJ FK FM FO FR
    GA GB GD GE GF GG GH GI GL GM GN GP GQ GR GS GT GU GW GY HK HM HN HR HT HU
    ID IE IL IM IN IO IQ IR IS IT JE JM JO JP KE KG KH KI KM KN KP KR KW KY KZ
    LA LB LC LI LK LR LS LT LU LV LY MA MC MD ME MF MG MH MK ML MM MN MO MP MQ
    MR MS MT MU MV MW MX MY MZ NA NC NE NF NG NI NL NO NP NR NU NZ OM PA PE PF
    PG PH PK PL PM PN PR PS PT PW PY QA RE RO RS RU RW SA SB SC SD SE SG SH SI
    SJ SK SL SM SN SO SR SS ST SV SX SY SZ TC TD TF TG TH TJ TK TL TM TN TO TR
    TT TV TW TZ UA UG UM US UY UZ VA VC VE VG VI VN VU WF WS YE YT ZA ZM ZW
    """.split()
)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class BankRecord:
    """One bank-year observation with its country-level exposure vector."""

    lei: str
    name: str
    country: str
    total_assets: float
    capital: float
    exposures: dict[str, float] = field(default_factory=dict)

    def total_exposure(self) -> float:
        return float(sum(self.exposures.values()))


@dataclass
class ExposurePanel:
    """Observation years mapped to their bank records, years ascending."""

    years: list[int]
    records: dict[int, list[BankRecord]]

    def year_total(self, year: int) -> float:
        return float(sum(r.total_exposure() for r in self.records[year]))

    def bank_counts(self) -> dict[int, int]:
        return {y: len(self.records[y]) for y in self.years}


def _check_lei(lei: str, line: int) -> None:
    if len(lei) != 20 or not lei.isalnum():
        raise InputError(
            f"line {line}: lei {lei!r} is not a 20-character alphanumeric identifier"
        )


def _warn_country(code: str, line: int) -> None:
    if code not in ISO_ALPHA2:
        warnings.warn(
            f"line {line}: unknown country code {code!r} retained", stacklevel=3
        )


def _parse_money(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise InputError(f"line {line}: column {column}: not a number: {text!r}") from exc
    if not np.isfinite(value):
        raise InputError(f"line {line}: column {column}: non-finite value {text!r}")
    if value < 0:
        raise InputError(f"line {line}: column {column}: negative value {value}")
    return value


def load_panel(path: str | Path, check_manifest: bool = True) -> ExposurePanel:
    """Read and validate a panel CSV.

    Parameters
    ----------
    path : str or Path
        CSV file in the long-form schema documented at module level.
    check_manifest : bool
        When True and ``<stem>.manifest.json`` exists next to the file,
        year and bank-count expectations are verified against it.

    Returns
    -------
    ExposurePanel

    Raises
    ------
    InputError
        Missing file, malformed rows, duplicate identifiers, negative
        amounts, or a manifest mismatch. Messages carry line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")

    banks: dict[tuple[int, str], BankRecord] = {}
    seen_pairs: set[tuple[int, str, str]] = set()

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise InputError(f"{path}: empty file") from exc
        if header != CSV_HEADER:
            raise InputError(
                f"{path}: bad header {header!r}, expected {CSV_HEADER!r}"
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise InputError(
                    f"line {line}: expected {len(CSV_HEADER)} fields, got {len(row)}"
                )
            year_s, lei, name, country, assets_s, capital_s, exp_country, exp_s = row
            try:
                year = int(year_s)
            except ValueError as exc:
                raise InputError(f"line {line}: column year: not an integer: {year_s!r}") from exc
            _check_lei(lei, line)
            _warn_country(country, line)
            _warn_country(exp_country, line)
            assets = _parse_money(assets_s, line, "total_assets")
            capital = _parse_money(capital_s, line, "capital")
            amount = _parse_money(exp_s, line, "exposure_amount")

            key = (year, lei)
            pair = (year, lei, exp_country)
            if pair in seen_pairs:
                raise InputError(
                    f"line {line}: duplicate identifier: lei {lei} listed twice for "
                    f"{exp_country} in year {year}"
                )
            seen_pairs.add(pair)
            rec = banks.get(key)
            if rec is None:
                banks[key] = BankRecord(lei, name, country, assets, capital, {exp_country: amount})
            else:
                if (rec.name, rec.country, rec.total_assets, rec.capital) != (
                    name,
                    country,
                    assets,
                    capital,
                ):
                    raise InputError(
                        f"line {line}: duplicate identifier: lei {lei} in year {year} "
                        f"has conflicting bank-level fields"
                    )
                rec.exposures[exp_country] = amount

    if not banks:
        raise InputError(f"{path}: no data rows")

    records: dict[int, list[BankRecord]] = {}
    for (year, _), rec in banks.items():
        records.setdefault(year, []).append(rec)
    years = sorted(records)
    for year in years:
        records[year].sort(key=lambda r: r.lei)
        if len(records[year]) < 2:
            raise InputError(f"year {year}: fewer than 2 banks, a network needs at least 2")

    panel = ExposurePanel(years=years, records=records)

    if check_manifest:
        mpath = path.with_suffix(".manifest.json")
        if mpath.exists():
            _check_against_manifest(panel, mpath)
    return panel


def _check_against_manifest(panel: ExposurePanel, mpath: Path) -> None:
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{mpath}: invalid JSON: {exc}") from exc
    years = manifest.get("years")
    counts = manifest.get("bank_counts", {})
    if years is not None and list(years) != panel.years:
        raise InputError(f"{mpath}: years {years} do not match data years {panel.years}")
    for year_s, expected in counts.items():
        year = int(year_s)
        actual = len(panel.records.get(year, []))
        if actual != expected:
            raise InputError(
                f"{mpath}: year {year} expects {expected} banks, data has {actual}"
            )


def write_panel(panel: ExposurePanel, path: str | Path, manifest: bool = True) -> None:
    """Write a panel CSV (rows sorted by year, lei, exposure country) plus manifest.

    Floats are written with 17 significant digits so load_panel(write_panel(p))
    reproduces p exactly.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for year in panel.years:
            for rec in sorted(panel.records[year], key=lambda r: r.lei):
                for exp_country in sorted(rec.exposures):
                    writer.writerow(
                        [
                            year,
                            rec.lei,
                            rec.name,
                            rec.country,
                            _fmt(rec.total_assets),
                            _fmt(rec.capital),
                            exp_country,
                            _fmt(rec.exposures[exp_country]),
                        ]
                    )
    if manifest:
        doc = {
            "years": panel.years,
            "bank_counts": {str(y): len(panel.records[y]) for y in panel.years},
        }
        mpath = path.with_suffix(".manifest.json")
        mpath.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def synthesize_panel(
    spec: dict[int, dict], seed: int, sigma: float = 1.0
) -> ExposurePanel:
    """Generate a deterministic synthetic panel matching per-year aggregates.

    Parameters
    ----------
    spec : dict
        Maps year to ``{"n_banks": int, "total_exposure": float,
        "country_list": [codes]}``. Bank count and total exposure are met
        exactly; bank i keeps the same identifier across years so balanced
        subsets are non-empty.
    seed : int
        Master seed. Identical (spec, seed, sigma) give identical panels.
    sigma : float
        Log-normal shape of the raw exposure draws before rescaling.
        Larger values give heavier right skew across (bank, country) cells.

    Returns
    -------
    ExposurePanel
    """
    if not spec:
        raise DomainError("empty synthesis spec")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    records: dict[int, list[BankRecord]] = {}
    for year in sorted(spec):
        cfg = spec[year]
        n = int(cfg["n_banks"])
        total = float(cfg["total_exposure"])
        countries = list(cfg["country_list"])
        if n < 2:
            raise DomainError(f"year {year}: n_banks must be at least 2, got {n}")
        if total <= 0:
            raise DomainError(f"year {year}: total_exposure must be positive, got {total}")
        if not countries:
            raise DomainError(f"year {year}: empty country_list")

        draws = rng.lognormal(mean=0.0, sigma=sigma, size=(n, len(countries)))
        draws *= total / draws.sum()
        asset_mult = rng.uniform(5.0, 15.0, size=n)
        capital_ratio = rng.uniform(0.08, 0.16, size=n)

        year_records = []
        for i in range(n):
            exposures = {countries[k]: float(draws[i, k]) for k in range(len(countries))}
            assets = float(draws[i].sum() * asset_mult[i])
            year_records.append(
                BankRecord(
                    lei=f"SYNTH{i:015d}",
                    name=f"Synthetic Bank {i:03d}",
                    country=countries[i % len(countries)],
                    total_assets=assets,
                    capital=float(assets * capital_ratio[i]),
                    exposures=exposures,
                )
            )
        records[year] = year_records
    return ExposurePanel(years=sorted(records), records=records)
