import io

import numpy as np
import pandas as pd
import pytest

from dtebounds.exceptions import ConfigError, DataError, InsufficientDataError, ParseError
from dtebounds.panel import (
    PanelDataset,
    all_patterns,
    as_pattern,
    classify,
    flip_last,
    group_matrices,
    group_matrix,
    load_panel,
)


def _csv(rows, header="unit,period,treatment,outcome"):
    return io.StringIO("\n".join([header, *rows]) + "\n")


def _panel(paths, outcomes=None, extra=None):
    """Long frame from a dict unit -> treatment path (periods 1..T)."""
    recs = []
    for u, path in paths.items():
        for s, d in enumerate(path, start=1):
            y = float(u * 10 + s) if outcomes is None else outcomes[u][s - 1]
            rec = {"unit": u, "period": s, "treatment": d, "outcome": y}
            if extra:
                rec.update(extra[u])
            recs.append(rec)
    return PanelDataset.from_frame(pd.DataFrame(recs))


def test_complete_three_by_three_ingests_everything():
    rows = [f"{u},{s},1,{u + s}.5" for u in range(3) for s in range(1, 4)]
    data = load_panel(_csv(rows))
    assert len(data.frame) == 9
    assert data.n_missing_rows == 0
    assert data.periods == (1, 2, 3)


def test_missing_period_drops_unit_from_window():
    rows = [f"{u},{s},0,1.0" for u in range(3) for s in range(1, 4) if not (u == 2 and s == 2)]
    index = classify(load_panel(_csv(rows)), (1, 2, 3))
    assert index.n_dropped == 1
    assert index.units.tolist() == ["0", "1"]  # ids stay opaque strings


def test_missing_token_counts_as_dropped_row():
    rows = ["1,1,0,1.0", "1,2,0,", "1,3,0,2.0"]
    data = load_panel(_csv(rows))
    assert data.n_missing_rows == 1
    assert len(data.frame) == 2


def test_non_binary_treatment_names_the_line():
    rows = ["1,1,0,1.0", "1,2,2,1.0"]
    with pytest.raises(DataError, match="line 3"):
        load_panel(_csv(rows))


def test_malformed_row_reports_line_number():
    with pytest.raises(ParseError) as err:
        load_panel(_csv(["1,1,0,1.0", "1,2,0"]))
    assert err.value.line == 3


def test_duplicate_unit_period_is_rejected():
    with pytest.raises(DataError, match="duplicate"):
        load_panel(_csv(["1,1,0,1.0", "1,1,1,2.0"]))


def test_missing_schema_column_is_config_error():
    with pytest.raises(ConfigError):
        load_panel(_csv(["1,1,1.0"], header="unit,period,outcome"))


def test_schema_mapping_renames_columns():
    src = _csv(["a,2001,1,3.5"], header="id,year,treated,bmi")
    data = load_panel(src, {"unit": "id", "period": "year", "treatment": "treated", "outcome": "bmi"})
    assert data.frame.loc[0, "outcome"] == 3.5
    assert data.periods == (2001,)


def test_outcome_range_trims_and_counts():
    data = load_panel(_csv(["1,1,0,10", "1,2,0,20", "1,3,0,50"]), outcome_range=(17.5, 42))
    assert data.frame["outcome"].tolist() == [20.0]
    assert data.n_missing_rows == 2


def test_three_singleton_groups():
    data = _panel({0: (1, 1, 1), 1: (1, 0, 1), 2: (1, 1, 0)})
    index = classify(data, (1, 2, 3))
    for p in [(1, 1, 1), (1, 0, 1), (1, 1, 0)]:
        assert index.size(p) == 1
        assert index.proportions[p] == pytest.approx(1 / 3)
    assert sum(index.proportions.values()) == pytest.approx(1.0)


def test_all_untreated_units():
    data = _panel({u: (0, 0, 0) for u in range(5)})
    props = classify(data, (1, 2, 3)).proportions
    assert props[(0, 0, 0)] == 1.0
    assert all(v == 0 for p, v in props.items() if p != (0, 0, 0))


def test_six_period_window_has_64_cells():
    data = _panel({0: (1, 0, 1, 1, 1, 1), 1: (0, 0, 0, 0, 0, 0)})
    index = classify(data, tuple(range(1, 7)))
    assert len(index.groups) == 64
    assert index.size((1, 0, 1, 1, 1, 1)) == 1


def test_group_matrix_orders_columns_oldest_first():
    data = _panel({0: (1, 1, 1), 1: (1, 1, 1)})
    index = classify(data, (1, 2, 3))
    mat = group_matrix(data, index, (1, 1, 1), min_size=1)
    assert mat.shape == (2, 3)
    np.testing.assert_array_equal(mat[0], [1.0, 2.0, 3.0])


def test_covariate_filter_keeps_matching_units():
    extra = {0: {"sex": "female"}, 1: {"sex": "male"}, 2: {"sex": "female"}}
    data = _panel({u: (1, 1, 1) for u in range(3)}, extra=extra)
    index = classify(data, (1, 2, 3))
    mat = group_matrix(data, index, "111", {"sex": "female"}, min_size=1)
    np.testing.assert_array_equal(mat[:, 0], [1.0, 21.0])
    mat = group_matrix(data, index, "111", lambda cov: cov["sex"] == "male", min_size=1)
    assert mat.shape == (1, 3)


def test_empty_after_filter_is_insufficient():
    extra = {0: {"sex": "male"}}
    data = _panel({0: (1, 1, 1)}, extra=extra)
    index = classify(data, (1, 2, 3))
    with pytest.raises(InsufficientDataError, match="111") as err:
        group_matrix(data, index, (1, 1, 1), {"sex": "female"})
    assert err.value.pattern == (1, 1, 1)


def test_default_minimum_group_size():
    data = _panel({u: (1, 1, 1) for u in range(19)})
    index = classify(data, (1, 2, 3))
    with pytest.raises(InsufficientDataError):
        group_matrix(data, index, (1, 1, 1))
    groups, _ = group_matrices(data, (1, 2, 3))
    assert len(groups[(1, 1, 1)]) == 19


def test_pattern_helpers():
    assert as_pattern("101") == (1, 0, 1)
    assert flip_last((1, 1, 1)) == (1, 1, 0)
    assert all_patterns(3)[0] == (1, 1, 1)
    assert all_patterns(3)[-1] == (0, 0, 0)
    with pytest.raises(ConfigError):
        as_pattern("12")


def test_window_outside_data_is_config_error():
    data = _panel({0: (1, 1, 1)})
    with pytest.raises(ConfigError):
        classify(data, (2, 3, 4))
