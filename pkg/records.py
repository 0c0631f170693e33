import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, Field

from exceptions import SchemaMismatchError, SpecParseError
from models import ExperimentSpec, OutputFormat, Provenance

logger = logging.getLogger(__name__)

WEIGHT = "weight"
DELAY = "delay"
ATTACK = "attack"
TIP_SERIES = "tip_series"
RACE = "race"

SCHEMAS: Dict[str, List[str]] = {
    WEIGHT: ["regime", "t", "expected_weight", "sim_mean", "sim_se", "replications", "seed"],
    DELAY: ["regime", "m", "lambda", "delay_analytic", "delay_sim_mean", "delay_sim_se"],
    ATTACK: ["regime", "m", "lambda", "mu", "p", "q", "prob_formula", "prob_mc", "mc_se", "method"],
    TIP_SERIES: ["regime", "t", "mean_tip_count", "se_tip_count", "replications", "seed"],
    RACE: ["alpha", "beta", "offset", "lambda", "mu", "p", "q", "prob_formula", "prob_mc", "mc_se"],
}

META_COLUMNS = ["provenance", "spec_hash", "experiment_id"]

# columns identifying a row, and (reference, stochastic) value column pairs
ROW_KEYS: Dict[str, List[str]] = {
    WEIGHT: ["regime", "t"],
    DELAY: ["regime", "m", "lambda"],
    ATTACK: ["regime", "m", "lambda", "mu", "method"],
    TIP_SERIES: ["regime", "t"],
    RACE: ["alpha", "beta", "offset", "lambda", "mu"],
}
VALUE_COLUMNS: Dict[str, List[Tuple[str, Optional[str]]]] = {
    WEIGHT: [("expected_weight", "sim_mean")],
    DELAY: [("delay_analytic", "delay_sim_mean")],
    ATTACK: [("prob_formula", "prob_mc")],
    TIP_SERIES: [("mean_tip_count", None)],
    RACE: [("prob_formula", "prob_mc")],
}

def columns_for(schema: str) -> List[str]:
    columns = list(SCHEMAS[schema])
    if "seed" not in columns:
        columns.append("seed")
    return columns + META_COLUMNS

class ResultRecord(BaseModel):
    """One output row; stochastic fields stay None on analytic rows"""
    experiment_id: str
    provenance: Provenance
    seed: Optional[int] = None
    values: Dict[str, Any] = Field(default_factory=dict)

    def to_row(self, spec_hash: str) -> Dict[str, Any]:
        row = dict(self.values)
        row["seed"] = self.seed
        row["provenance"] = self.provenance.value
        row["spec_hash"] = spec_hash
        row["experiment_id"] = self.experiment_id
        return row

class ResultTable(BaseModel):
    schema_name: str
    spec_hash: str
    experiment_id: str
    records: List[ResultRecord] = Field(default_factory=list)

    def add(self, provenance: Provenance, seed: Optional[int] = None, **values):
        self.records.append(
            ResultRecord(experiment_id=self.experiment_id, provenance=provenance, seed=seed, values=values)
        )

    def to_frame(self) -> pd.DataFrame:
        rows = [record.to_row(self.spec_hash) for record in self.records]
        # object dtype keeps integer columns with gaps from turning into floats
        return pd.DataFrame(rows, columns=columns_for(self.schema_name), dtype=object)

def spec_hash(spec: ExperimentSpec) -> str:
    """Hash of the experiment set-up; the seed has its own column and the output location is not part of it"""
    payload = spec.model_dump(mode="json", exclude={"output", "format", "seed"})
    encoded = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()[:16]

def experiment_id(spec: ExperimentSpec) -> str:
    name = spec.figure.value if spec.figure else spec.kind.value
    return f"{name}-{spec_hash(spec)[:8]}"

def new_table(schema: str, spec: ExperimentSpec) -> ResultTable:
    return ResultTable(schema_name=schema, spec_hash=spec_hash(spec), experiment_id=experiment_id(spec))

def write_table(table: ResultTable, path: Path, fmt: OutputFormat = OutputFormat.CSV) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = table.to_frame()
    if fmt == OutputFormat.JSON:
        frame.to_json(path, orient="records", indent=2, double_precision=15)
    else:
        frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} {table.schema_name} rows to {path}")
    return path

def detect_schema(columns) -> str:
    present = set(columns)
    for name, schema_columns in SCHEMAS.items():
        if set(schema_columns) <= present:
            return name
    raise SchemaMismatchError(f"Columns {sorted(present)} match no known result schema")

def load_table(path: Path) -> Tuple[str, pd.DataFrame]:
    path = Path(path)
    if not path.exists():
        raise SpecParseError(f"Result file not found: {path}")
    try:
        if path.suffix.lower() == ".json":
            frame = pd.read_json(path, orient="records")
        else:
            frame = pd.read_csv(path)
    except ValueError as e:
        raise SchemaMismatchError(f"Could not read result table {path}: {e}")
    return detect_schema(frame.columns), frame

class RowComparison(BaseModel):
    key: str
    column: str
    reference: float
    candidate: float
    relative_error: float
    passed: bool

class ComparisonReport(BaseModel):
    schema_name: str
    tolerance: float
    rows: List[RowComparison] = Field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max((row.relative_error for row in self.rows), default=0.0)

    @property
    def failures(self) -> List[RowComparison]:
        return [row for row in self.rows if not row.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

def relative_error(reference: float, candidate: float) -> float:
    if reference == candidate:
        return 0.0
    return abs(reference - candidate) / max(abs(reference), 1e-12)

def _column_pairs(schema: str, first: pd.DataFrame, second: pd.DataFrame) -> List[Tuple[str, str]]:
    """An analytic-only first file is checked against the second file's stochastic column;
    otherwise matching columns are compared"""
    pairs = []
    for reference, stochastic in VALUE_COLUMNS[schema]:
        if stochastic is None:
            pairs.append((reference, reference))
            continue
        first_has = first[stochastic].notna().any()
        second_has = second[stochastic].notna().any()
        if second_has and not first_has:
            pairs.append((reference, stochastic))
        else:
            pairs.append((reference, reference))
            if first_has and second_has:
                pairs.append((stochastic, stochastic))
    return pairs

def compare(first_path: Path, second_path: Path, tolerance: float) -> ComparisonReport:
    """Per-row relative error between two result files sharing a schema and row keys"""
    first_schema, first = load_table(first_path)
    second_schema, second = load_table(second_path)
    if first_schema != second_schema:
        raise SchemaMismatchError(f"Cannot compare a {first_schema} table with a {second_schema} table")
    keys = ROW_KEYS[first_schema]
    for frame in (first, second):
        for key in keys:
            frame[key] = frame[key].astype(str)

    merged = first.merge(second, on=keys, how="outer", suffixes=("_first", "_second"), indicator=True)
    unmatched = merged[merged["_merge"] != "both"]
    if len(unmatched):
        sample = ", ".join("/".join(row[k] for k in keys) for _, row in unmatched.head(5).iterrows())
        raise SchemaMismatchError(f"{len(unmatched)} rows have no counterpart (e.g. {sample})")

    report = ComparisonReport(schema_name=first_schema, tolerance=tolerance)
    for reference_column, candidate_column in _column_pairs(first_schema, first, second):
        for _, row in merged.iterrows():
            reference = row[f"{reference_column}_first"]
            candidate = row[f"{candidate_column}_second"]
            if pd.isna(reference) or pd.isna(candidate):
                continue
            error = relative_error(float(reference), float(candidate))
            report.rows.append(RowComparison(
                key="/".join(str(row[k]) for k in keys),
                column=candidate_column,
                reference=float(reference),
                candidate=float(candidate),
                relative_error=error,
                passed=error <= tolerance or math.isclose(float(reference), float(candidate)),
            ))
    return report
