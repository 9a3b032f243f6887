from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnsched.analysis import (
    FootprintReport,
    alpha,
    alpha_exact,
    alpha_limits,
    alpha_svg,
    alpha_sweep,
    alpha_sweep_csv,
    closed_form_lbl,
    closed_form_lf,
    report_csv,
    seqlen_scaling_check,
    verify_against_simulation,
)


def test_closed_form_lbl_values():
    assert closed_form_lbl(128, 1024) == 393216
    assert closed_form_lbl(1024, 128) == 1310720
    assert closed_form_lbl(64, 64) == 12288
    # both branches agree at M = N
    assert 3 * 64 * 64 == 2 * 64 * 64 + 64 * 64


def test_closed_form_lf_values():
    assert closed_form_lf(128, 1024, "fuse_q_qkt") == 278528
    assert closed_form_lf(1024, 128, "fuse_qkt_qktv") == 393216
    assert closed_form_lf(64, 64, "fuse_q_qkt") == 12288
    assert closed_form_lf(64, 64, "fuse_qkt_qktv") == 12288
    with pytest.raises(KeyError):
        closed_form_lf(64, 64, "fuse_nothing")


def test_alpha_deep_flat_square():
    a, best = alpha(1024, 128)
    assert a == 0.3 and best == "fuse_qkt_qktv"
    a, best = alpha(128, 1024)
    assert abs(a - 2176 / 3072) < 1e-12 and best == "fuse_q_qkt"
    assert alpha(256, 256) == (1.0, "none")


def test_alpha_exact_fractions():
    assert alpha_exact(1024, 128)[0] == Fraction(3, 10)
    assert alpha_exact(128, 1024)[0] == Fraction(2176, 3072)


def test_alpha_limit_samples():
    # M/N = 1/64 and 64 from the formula directly
    assert alpha(64, 4096)[0] == pytest.approx((2 + 1 / 64) / 3)
    assert alpha(4096, 64)[0] == pytest.approx(3 / 66)


def test_alpha_limits_pass():
    lim = alpha_limits()
    assert lim.ok
    assert lim.flat_limit_error < 0.01
    assert lim.deep_limit_error < 0.01


@given(
    m=st.integers(min_value=1, max_value=512),
    n=st.integers(min_value=1, max_value=512),
    k=st.integers(min_value=1, max_value=7),
)
@settings(max_examples=60, deadline=None)
def test_alpha_scale_invariance(m, n, k):
    assert alpha_exact(k * m, k * n)[0] == alpha_exact(m, n)[0]


@given(m=st.integers(min_value=1, max_value=512), n=st.integers(min_value=1, max_value=512))
@settings(max_examples=60, deadline=None)
def test_alpha_below_one_off_square(m, n):
    a, best = alpha(m, n)
    if m == n:
        assert a == 1.0
    else:
        assert 0 < a < 1
        assert best in ("fuse_q_qkt", "fuse_qkt_qktv")


@given(m=st.integers(min_value=1, max_value=300), n=st.integers(min_value=1, max_value=300))
@settings(max_examples=60, deadline=None)
def test_alpha_is_best_template_ratio(m, n):
    a_lbl = closed_form_lbl(m, n)
    best = min(
        closed_form_lf(m, n, t) / a_lbl for t in ("fuse_q_qkt", "fuse_qkt_qktv")
    )
    assert alpha(m, n)[0] == pytest.approx(best)


def test_footprint_report():
    rep = FootprintReport.for_shape(128, 1024)
    assert rep.a_lbl == 393216
    assert rep.a_lf["fuse_q_qkt"] == 278528
    assert rep.best_template == "fuse_q_qkt"
    assert 0 < rep.alpha <= 1


def test_verify_against_simulation_small():
    rep = verify_against_simulation(64, 128)
    assert rep.ok, rep.mismatches
    rep = verify_against_simulation(128, 64)
    assert rep.ok, rep.mismatches


def test_verify_reports_injected_fault(monkeypatch):
    import attnsched.analysis as mod

    real = mod.closed_form_lbl
    monkeypatch.setattr(mod, "closed_form_lbl", lambda m, n: real(m, n) + 1)
    rep = verify_against_simulation(64, 64)
    assert not rep.ok
    assert any("lbl_memory_optimal" in msg for msg in rep.mismatches)


def test_seqlen_scaling_check_passes():
    rep = seqlen_scaling_check()
    assert rep.ok
    assert abs(rep.ratio - rep.estimate_ratio) <= 0.10 * rep.estimate_ratio
    assert abs(rep.ratio - rep.mac_ratio) <= 0.10 * rep.mac_ratio
    assert 2.0 <= rep.avg_macs_per_cycle <= 6.0


def test_report_csv_shape():
    text = report_csv([(64, 64), (1024, 128)])
    lines = text.strip().splitlines()
    assert lines[0].startswith("M,N,A_LBL")
    assert len(lines) == 3
    assert lines[2].split(",")[5] == "0.3"


def test_alpha_sweep_and_svg():
    samples = alpha_sweep(Fraction(1, 8), Fraction(8), points_per_octave=2)
    assert len(samples) == 13
    values = [a for _, a, _ in samples]
    peak_at = values.index(max(values))
    assert values[peak_at] == 1.0  # alpha peaks at the square case
    assert all(v <= 1.0 for v in values)
    csv = alpha_sweep_csv(samples)
    assert csv.splitlines()[0] == "m_over_n,alpha,best_template"
    svg = alpha_svg(samples)
    assert svg.startswith("<svg") and "polyline" in svg
