import numpy as np
import pytest

from degensink.experiments import (
    appendix_a_checkpoints,
    classify_with_fallback,
    experiment_fig6,
    experiment_iterations_vs_zeros,
    run_appendix_a,
)
from conftest import PRINTED_CHECKPOINTS, assert_printed


def test_checkpoints_match_printed_values():
    snaps = appendix_a_checkpoints()
    assert sorted(snaps) == sorted(PRINTED_CHECKPOINTS)
    for step, want in PRINTED_CHECKPOINTS.items():
        got = snaps[step]
        assert_printed(got["a"], want["a"])
        assert_printed(got["b"], want["b"])
        key = "P" if "P" in want else "Q"
        assert_printed(got[key], want[key], tiny=1e-14)


def test_run_appendix_a_formats_report():
    text = run_appendix_a()
    for token in ("Iteration 1:", "Iteration 80:", "Iteration 81:", "P* =", "R* =", "Z ="):
        assert token in text
    assert "5.886" in text


def test_iterations_vs_zeros_small():
    rows = experiment_iterations_vs_zeros([1, 2, 4], size=40)
    assert [row["n_blocks"] for row in rows] == [1, 2, 4]
    one = rows[0]
    assert one["extra_zeros"] == 0
    # scalable case: all three methods effectively coincide
    assert abs(one["iters_naive"] - one["iters_plain"]) <= 1
    assert abs(one["iters_preproc"] - one["iters_plain"]) <= 3
    for row in rows:
        p_plain, p_naive, p_masked = row.pop("_p_stars")
        assert np.abs(p_plain - p_naive).max() < 1e-6
        assert np.abs(p_plain - p_masked).max() < 1e-6
    assert rows[2]["extra_zeros"] > 0
    assert rows[2]["iters_preproc"] < rows[2]["iters_plain"]
    assert rows[2]["iters_naive"] < rows[2]["iters_plain"]


@pytest.mark.slow
def test_fig6_full_size():
    lam_rows, eps_rows, classification = experiment_fig6(size=100)
    assert classification.tag == "NonScalable"
    tvs = [tv for _, tv in lam_rows]
    assert tvs == sorted(tvs, reverse=True)
    assert tvs[-1] < 2e-2
    for _, tv, _ in eps_rows:
        assert tv >= 0.1
    iters = [it for _, _, it in sorted(eps_rows, reverse=True)]
    assert iters == sorted(iters)


def test_classify_with_fallback_beyond_cap():
    from degensink.instances import block_ratio_schedule, staircase_instance
    r, mu, nu, _, _ = staircase_instance(40, [20, 20], block_ratio_schedule(2))
    out = classify_with_fallback(r, mu, nu)
    assert out.tag == "NonScalable"
