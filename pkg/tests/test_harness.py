import json
import re
import math
from pathlib import Path

import numpy as np
import pytest

from mmpair import harness
from mmpair.errors import ConfigurationError, NumericError, SizeError
from mmpair.harness import (SWEEP_COLUMNS, SweepSpec, error_rows, plot_data, read_sweep,
                            rows_to_csv, run_sweep, write_plot_data, write_sweep)

GOLDEN = Path(__file__).parent / "golden" / "sweep_header.csv"


def config(**kw):
    d = {"layout": {"dims": [2, 2, 2]}, "generator": {"latent_dim": 2, "mixing_seed": 1},
         "n_values": [16], "modality_pairs": [[[1], [1, 2, 3]]], "trials_per_cell": 1,
         "train": {"max_iters": 200}, "complexity": {"grid_size": 32, "mc_trials": 100}}
    d.update(kw)
    return d


@pytest.fixture(scope="module")
def small_rows():
    spec = SweepSpec.from_dict(config(n_values=[12, 16], trials_per_cell=2,
                                      modality_pairs=[[[1], [1, 2]], [[], [1, 2, 3]]]))
    return spec, run_sweep(spec)


def test_single_cell_gives_one_row():
    spec = SweepSpec.from_dict(config())
    text = rows_to_csv(run_sweep(spec))
    lines = text.split("\n")
    assert len(lines) == 3 and lines[-1] == ""


def test_header_matches_golden_file():
    assert GOLDEN.read_text() == ",".join(SWEEP_COLUMNS) + "\n"
    assert rows_to_csv([]) == GOLDEN.read_text()


def test_rows_are_ordered(small_rows):
    _, rows = small_rows
    keys = [(r.n, r.M_set, r.trial) for r in rows]
    assert keys == [(n, m, t) for n in (12, 16) for m in ("1 2", "1 2 3") for t in (0, 1)]


def test_determinism_and_worker_count(small_rows):
    spec, rows = small_rows
    again = rows_to_csv(run_sweep(spec)).encode()
    assert again == rows_to_csv(rows).encode()
    assert rows_to_csv(run_sweep(spec, threads=2)).encode() == again


def test_row_invariants(small_rows):
    _, rows = small_rows
    for r in rows:
        cells = r.cells()
        assert len(cells) == len(SWEEP_COLUMNS) and all(c != "" for c in cells[:-1])
        assert r.t3_holds == (r.t3_lhs <= r.t3_rhs)
        assert r.t4_holds == (r.t4_lhs <= r.t4_rhs)
        assert r.prop1_ok is True
        assert r.gamma == r.eta_M - r.eta_N
        if math.isnan(r.t5_bound):
            assert "theorem5-log-argument-nonpositive" in r.flags
        # the true-composite term cancels in the excess-risk difference
        diff = r.risk_hat_M - r.risk_hat_N
        if r.t6_holds_as_printed is not None and abs(abs(diff) - r.t6_gap) > 1e-9:
            assert r.t6_holds_as_printed == (diff >= r.t6_gap)
            assert r.t6_holds_insight5 == (-diff >= r.t6_gap)


def test_floats_have_17_digits(small_rows):
    _, rows = small_rows
    line = rows_to_csv(rows[:1]).split("\n")[1].split(",")
    x = line[SWEEP_COLUMNS.index("t3_rhs")]
    assert float(x) == rows[0].t3_rhs and repr(float(x)) == repr(rows[0].t3_rhs)


def test_failed_cell_is_flagged(monkeypatch):
    def boom(*a, **k):
        raise NumericError("non-finite iterate")

    monkeypatch.setattr(harness, "train_nested", boom)
    spec = SweepSpec.from_dict(config())
    rows = run_sweep(spec)
    assert rows[0].flags == ["error:NumericError"]
    assert error_rows(rows) == 1
    assert rows_to_csv(rows).split("\n")[1].endswith(",na,error:NumericError")


@pytest.mark.parametrize("key,value,field", [
    ("n_values", [], "n_values"),
    ("n_values", [1], "n_values"),
    ("modality_pairs", [[[1, 2], [1]]], "modality_pairs[0]"),
    ("modality_pairs", [[[1], [4]]], "modality_pairs[0]"),
    ("trials_per_cell", 0, "trials_per_cell"),
    ("delta", 1.5, "delta"),
    ("layout", {"dims": [0]}, "layout.dims"),
])
def test_invalid_specs_name_the_field(key, value, field):
    with pytest.raises(ConfigurationError, match="^" + re.escape(field)):
        SweepSpec.from_dict(config(**{key: value}))


def test_spec_round_trip():
    spec = SweepSpec.from_dict(config())
    back = SweepSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()


def test_write_and_read(tmp_path, small_rows):
    spec, rows = small_rows
    path = tmp_path / "s.csv"
    write_sweep(spec, rows, path)
    assert path.read_bytes() == rows_to_csv(rows).encode("utf-8")
    assert b"\r" not in path.read_bytes()
    meta = json.loads(Path(str(path) + ".meta.json").read_text())
    assert "holdout" in meta["population_risk"]
    assert len(read_sweep(path)) == len(rows)


def test_read_rejects_foreign_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigurationError):
        read_sweep(p)


def fixture_rows(values, key="rad_mc", ns=(32, 64, 128)):
    rows = []
    for n in ns:
        for v in values:
            r = {c: "0" for c in SWEEP_COLUMNS}
            r.update({"n": str(n), key: repr(float(v)), "M_set": "1 2", "t3_lhs": "0"})
            rows.append(r)
    return rows


def test_decay_of_constant_complexity_is_flat():
    pts = plot_data(fixture_rows([0.3], ns=(32, 64, 128, 256)), "decay")
    slope = np.polyfit([p[0] for p in pts], [p[1] for p in pts], 1)[0]
    assert abs(slope) < 1e-12


def test_aggregation_matches_hand_computation():
    rows = fixture_rows([1.0, 2.0, 6.0], key="pop_risk_M", ns=(32,))
    (x, y, se), = plot_data(rows, "risk-vs-modalities")
    assert x == 2.0 and y == 3.0
    assert se == pytest.approx(math.sqrt(((1 - 3) ** 2 + (2 - 3) ** 2 + (6 - 3) ** 2) / 2 / 3))
    rows = fixture_rows([1.0, 2.0, 6.0], key="t3_rhs", ns=(32,))
    assert plot_data(rows, "bound-gap")[0][:2] == (32.0, 3.0)


def test_plot_data_errors(tmp_path):
    with pytest.raises(SizeError, match="no rows"):
        plot_data([], "decay")
    with pytest.raises(ConfigurationError):
        plot_data(fixture_rows([1.0]), "histogram")


def test_plot_file_layout(tmp_path):
    write_plot_data([(1.0, 2.0, 0.5)], tmp_path / "p.tsv")
    assert (tmp_path / "p.tsv").read_text() == "x\ty\tstderr\n1\t2\t0.5\n"
