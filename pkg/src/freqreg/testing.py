"""Checks on emitted tables and on tape gradients.

Report tables go through `validate` with a schema from schemas/*.json
before they are written:

    validate(table, {
        "columns": {"dataset": "string", "auroc": "double"},
        "not_null": ["dataset", "auroc"],
        "unique": ["dataset"],
        "min_rows": 1,
    })
    assert_in_range(table, "auroc", 0, 1)

Tensor tests compare tape gradients against central differences:

    assert_gradients_match(lambda a, b: tensor.mul(a, b), [x, y])
"""

import numpy as np
import pyarrow as pa
import pyarrow.compute as pc

from . import tensor as T


def _present(table: pa.Table, column: str) -> pa.ChunkedArray:
    return pc.drop_null(table.column(column))


def assert_in_set(table: pa.Table, column: str, valid_values: set) -> None:
    values = _present(table, column)
    allowed = pa.array(sorted(valid_values), type=values.type)
    stray = pc.filter(values, pc.invert(pc.is_in(values, value_set=allowed))).to_pylist()
    assert not stray, f"{column}: values outside {sorted(valid_values)}: {stray[:5]}"


def assert_in_range(table: pa.Table, column: str, min_val: float | None = None,
                    max_val: float | None = None) -> None:
    """Closed interval; either bound may be left open with None."""
    values = _present(table, column).to_numpy()
    low = values < min_val if min_val is not None else np.zeros(values.shape, bool)
    high = values > max_val if max_val is not None else np.zeros(values.shape, bool)
    outside = values[low | high]
    assert outside.size == 0, f"{column}: {outside.size} values outside [{min_val}, {max_val}]: {outside[:5].tolist()}"


def assert_finite(table: pa.Table, column: str) -> None:
    values = _present(table, column).to_numpy().astype(np.float64)
    bad = int(np.count_nonzero(~np.isfinite(values)))
    assert bad == 0, f"{column}: {bad} NaN or infinite values"


def validate(table: pa.Table, schema: dict) -> None:
    """Raise AssertionError unless `table` satisfies `schema`.

    Schema keys, all optional: `columns` maps a name to a substring of its
    arrow type, `not_null` and `unique` list columns (several unique columns
    form one composite key), `min_rows` and `max_rows` bound the row count.
    """
    rows = table.num_rows
    if "min_rows" in schema:
        assert rows >= schema["min_rows"], f"{rows} rows, need at least {schema['min_rows']}"
    if "max_rows" in schema:
        assert rows <= schema["max_rows"], f"{rows} rows, allowed at most {schema['max_rows']}"

    for name, type_hint in schema.get("columns", {}).items():
        assert name in table.column_names, f"table has no column {name!r}"
        arrow_type = str(table.schema.field(name).type)
        assert type_hint in arrow_type, f"{name}: arrow type {arrow_type} does not match {type_hint!r}"

    for name in schema.get("not_null", []):
        nulls = table.column(name).null_count
        assert nulls == 0, f"{name}: {nulls} nulls"

    key = schema.get("unique")
    if key:
        key = [key] if isinstance(key, str) else list(key)
        distinct = table.group_by(key).aggregate([]).num_rows
        assert distinct == rows, f"{'+'.join(key)}: {rows - distinct} duplicate keys"


def numeric_gradient(fn, inputs: list[np.ndarray], projection: np.ndarray, eps: float = 1e-6) -> list[np.ndarray]:
    """Central differences of sum(fn(*inputs) * projection) w.r.t. every input element."""
    def scalar(arrays):
        return float(np.sum(fn(*[T.Tensor(a) for a in arrays]).data * projection))

    out = []
    for i, x in enumerate(inputs):
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            plus = [a.copy() for a in inputs]
            minus = [a.copy() for a in inputs]
            plus[i][idx] += eps
            minus[i][idx] -= eps
            g[idx] = (scalar(plus) - scalar(minus)) / (2.0 * eps)
        out.append(g)
    return out


def analytic_gradient(fn, inputs: list[np.ndarray], projection: np.ndarray) -> list[np.ndarray]:
    leaves = [T.Tensor(a.copy(), requires_grad=True) for a in inputs]
    with T.Tape() as tape:
        loss = T.sum(T.mul(fn(*leaves), projection))
    grads = tape.gradient(loss)
    return [grads.get(t.node_id, np.zeros_like(t.data)) if t._tape is tape else np.zeros_like(t.data)
            for t in leaves]


def assert_gradients_match(fn, inputs: list[np.ndarray], eps: float = 1e-6, tol: float = 1e-4,
                           seed: int = 0) -> None:
    """Compare tape gradients with central differences at float64.

    The output is reduced to a scalar by a fixed random projection, so every
    output element contributes. Relative error is max|analytic - numeric|
    over max(1, max|numeric|), per input.
    """
    inputs = [np.asarray(a, dtype=np.float64) for a in inputs]
    out_shape = fn(*[T.Tensor(a) for a in inputs]).shape
    projection = np.random.default_rng(seed).standard_normal(out_shape)
    analytic = analytic_gradient(fn, inputs, projection)
    numeric = numeric_gradient(fn, inputs, projection, eps)
    for i, (a, n) in enumerate(zip(analytic, numeric)):
        assert a.shape == n.shape, f"input {i}: gradient shape {a.shape} != input shape {n.shape}"
        err = float(np.max(np.abs(a - n))) / max(1.0, float(np.max(np.abs(n))))
        assert err < tol, f"input {i}: relative gradient error {err:.3e} >= {tol:.0e}"
