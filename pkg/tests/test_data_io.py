import numpy as np
import pandas as pd
import pytest
from openpyxl import load_workbook

import data_io
import rmt_bath as rb
from density_grid import gaussian_mixed_state
from errors import DomainError
from physical_model import CorrelatorSpec


def test_snapshot_keeps_values_and_provenance(tmp_path, small_grid):
    rho = gaussian_mixed_state(small_grid, 1.0, 0.3, 1.0, 0.9, p0=0.2, time_stamp=1.25)
    path = str(tmp_path / "snaps" / "snap_0001.bin")
    data_io.write_snapshot(path, rho, seed=2**63 + 5, config_hash="0123456789abcdef")
    back, meta = data_io.read_snapshot(path)
    np.testing.assert_array_equal(back.values, rho.values)
    assert back.time_stamp == 1.25
    assert back.spec == rho.spec
    assert meta["seed"] == 2**63 + 5
    assert meta["config_hash"] == "0123456789abcdef"
    assert meta["version"] == data_io.SNAPSHOT_VERSION


def test_header_layout_is_fixed():
    assert data_io.HEADER_DTYPE.itemsize == 16 + 4 * 8 + 3 * 8 + 8 + 32


def test_corrupt_snapshots_are_rejected(tmp_path, small_grid):
    rho = gaussian_mixed_state(small_grid, 1.0, 0.0, 1.0, 1.0)
    good = tmp_path / "good.bin"
    data_io.write_snapshot(str(good), rho, 0, "abc")
    raw = good.read_bytes()

    bad_magic = tmp_path / "magic.bin"
    bad_magic.write_bytes(b"X" + raw[1:])
    with pytest.raises(DomainError, match="magic"):
        data_io.read_snapshot(str(bad_magic))

    truncated = tmp_path / "short.bin"
    truncated.write_bytes(raw[:-16])
    with pytest.raises(DomainError, match="payload"):
        data_io.read_snapshot(str(truncated))

    tiny = tmp_path / "tiny.bin"
    tiny.write_bytes(raw[:20])
    with pytest.raises(DomainError):
        data_io.read_snapshot(str(tiny))

    with pytest.raises(DomainError, match="kind"):
        data_io.read_bath_matrices(str(good))


def test_bath_sample_file(tmp_path):
    spec = rb.EnsembleSpec(6, "GUE", 1.0, 0.0, 2.0, 1.0, 1.0, CorrelatorSpec(), (0.0, 1.0))
    smp = rb.sample(spec, seed=3, member=4)
    path = str(tmp_path / "member_0004.bin")
    data_io.write_bath_sample(path, smp, 3, "feed")
    matrices, meta = data_io.read_bath_matrices(path)
    np.testing.assert_array_equal(matrices, smp.matrices)
    assert (meta["nr"], meta["ns"], meta["time"]) == (2, 6, 4.0)


def test_table_with_provenance_header(tmp_path):
    df = pd.DataFrame({"t": [0.0, 0.5], "Q2": [1.0, 1.0 / 3.0]})
    path = data_io.write_table(df, str(tmp_path / "cumulants.tsv"), {"job": "evolve", "seed": 1})
    with open(path, encoding="utf-8") as f:
        assert f.readline() == "# job: evolve\n"
    back, provenance = data_io.read_table(path)
    assert provenance == {"job": "evolve", "seed": "1"}
    assert list(back.columns) == ["t", "Q2"]
    assert back["Q2"].iloc[1] == pytest.approx(1.0 / 3.0, rel=1e-11)


def test_summary_accepts_numpy_values(tmp_path):
    path = str(tmp_path / "summary.json")
    data_io.write_summary(path, {"nu": np.float64(0.98), "n": np.int64(3), "ok": np.bool_(True),
                                 "window": (10.0, 40.0), "arr": np.arange(2)})
    back = data_io.read_summary(path)
    assert back == {"nu": 0.98, "n": 3, "ok": True, "window": [10.0, 40.0], "arr": [0, 1]}


def test_report_workbook(tmp_path):
    sheets = {"cumulants": pd.DataFrame({"t": [0.0, 1.0], "P2": [1.0, 2.0]}),
              "a_rather_long_table_name_for_a_sheet": pd.DataFrame({"x": [1]})}
    path = data_io.write_report_workbook(str(tmp_path / data_io.REPORT_NAME), sheets, {"job": "evolve"})
    wb = load_workbook(path)
    assert wb.sheetnames == ["Provenance", "cumulants", "a_rather_long_table_name_for_a_"]
    ws = wb["cumulants"]
    assert ws.freeze_panes == "A2"
    assert ws["B3"].value == 2.0
    assert wb["Provenance"]["B2"].value == "evolve"
