"""Experiment table utilities.

Loads the output schemas and table metadata shipped with the repo, and
validates every emitted table against its schema before it is written.
"""

import json
from pathlib import Path

import pyarrow as pa
from freqreg import io
from freqreg.testing import assert_finite, assert_in_range, validate

SCHEMAS_DIR = Path(__file__).parent.parent / "schemas"
MAPPINGS_DIR = Path(__file__).parent.parent / "mappings"

# Columns that must lie in [0, 1] wherever they appear.
UNIT_INTERVAL_COLUMNS = ("auroc", "average_auroc", "overlap")


def load_output_schema(name: str) -> dict:
    """Load the column schema of an output table from schemas/<name>.json."""
    with open(SCHEMAS_DIR / f"{name}.json", "r") as f:
        return json.load(f)


def load_table_metadata() -> dict:
    """Load table metadata (file names, titles) from JSON file.

    Returns:
        Dict keyed by table name with file/title/description values.
    """
    with open(MAPPINGS_DIR / "table_metadata.json", "r") as f:
        return json.load(f)


_ARROW_TYPES = {"string": "string", "int": "int", "double": "double"}


def schema_checks(schema: dict) -> dict:
    """Translate a column schema into a `validate` spec."""
    columns = schema["columns"]
    return {
        "columns": {c["id"]: _ARROW_TYPES[c["type"]] for c in columns},
        "not_null": [c["id"] for c in columns if not c.get("nullable", True)],
        "unique": [c["id"] for c in columns if c.get("unique")][:1],
        "min_rows": 1,
    }


def validate_output_table(table: pa.Table, name: str) -> None:
    """Validate an output table before it is written.

    Args:
        table: The PyArrow table to validate.
        name: Output table name (schema file stem).
    """
    validate(table, schema_checks(load_output_schema(name)))
    for col in table.column_names:
        if pa.types.is_floating(table.schema.field(col).type):
            assert_finite(table, col)
        if col in UNIT_INTERVAL_COLUMNS:
            assert_in_range(table, col, 0, 1)


def write_table(table: pa.Table, name: str, output_dir: str) -> str:
    """Validate, then save as <output_dir>/<file name from table metadata>."""
    validate_output_table(table, name)
    filename = load_table_metadata()[name]["file"]
    return io.save_csv(table, f"{output_dir.rstrip('/')}/{filename}")
