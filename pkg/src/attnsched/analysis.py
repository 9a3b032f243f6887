"""Closed-form footprint formulas and cross-validation against simulation.

The memory-optimal layer-by-layer schedule of an M x N attention head peaks
at 3MN words when M <= N and at 2MN + M^2 when M > N.  Fusing Q into Q.K^T
caps the footprint at 2MN + M^2; fusing Q.K^T with the softmax and Q.K^T.V
caps it at 3MN.  The relative gain alpha = A_LF / A_LBL of the best template
is (2N + M) / 3N below the square case and 3N / (2N + M) above it, a
function of M/N only.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction

from .hwmodel import HardwareSpec, load_builtin
from .scheduler import ScheduleResult, schedule_template
from .workload import build_mhsa

#: Template names paired with their closed forms.
LF_TEMPLATES = ("fuse_q_qkt", "fuse_qkt_qktv")


def closed_form_lbl(m: int, n: int) -> int:
    """Peak active-feature words of the memory-optimal layer-by-layer schedule."""
    if m < 1 or n < 1:
        raise ValueError("M and N must be >= 1")
    return 3 * m * n if m <= n else 2 * m * n + m * m


def closed_form_lf(m: int, n: int, template: str) -> int:
    """Peak active-feature words of a layer-fused template schedule."""
    if m < 1 or n < 1:
        raise ValueError("M and N must be >= 1")
    if template == "fuse_q_qkt":
        return 2 * m * n + m * m
    if template == "fuse_qkt_qktv":
        return 3 * m * n
    raise KeyError(f"unknown template {template!r}")


def alpha_exact(m: int, n: int) -> tuple[Fraction, str]:
    """Relative footprint gain of the best fused template, as a fraction."""
    if m < n:
        return Fraction(2 * n + m, 3 * n), "fuse_q_qkt"
    if m > n:
        return Fraction(3 * n, 2 * n + m), "fuse_qkt_qktv"
    return Fraction(1), "none"


def alpha(m: int, n: int) -> tuple[float, str]:
    """Best-template footprint gain A_LF / A_LBL; 1 means no gain (M = N)."""
    frac, template = alpha_exact(m, n)
    return float(frac), template


@dataclass
class AlphaLimits:
    ratios: list[Fraction]
    values: list[float]
    flat_limit_error: float     # |alpha - 2/3| at the smallest M/N
    deep_limit_error: float     # |alpha * M / (3N) - 1| at the largest M/N

    @property
    def ok(self) -> bool:
        return self.flat_limit_error < 0.01 and self.deep_limit_error < 0.01


def alpha_limits(max_power: int = 8) -> AlphaLimits:
    """Check the asymptotes of alpha over a geometric sweep of M/N.

    As M/N -> 0 the gain approaches 2/3; as M/N -> infinity it behaves like
    3N/M.  Evaluated on ratios 2^-max_power .. 2^max_power.
    """
    ratios = [Fraction(2) ** p for p in range(-max_power, max_power + 1)]
    values = []
    for r in ratios:
        m, n = r.numerator * 64, r.denominator * 64
        values.append(alpha(m, n)[0])
    flat = abs(values[0] - 2.0 / 3.0)
    m, n = ratios[-1].numerator * 64, ratios[-1].denominator * 64
    deep = abs(alpha(m, n)[0] * m / (3.0 * n) - 1.0)
    return AlphaLimits(ratios, values, flat, deep)


@dataclass
class FootprintReport:
    m: int
    n: int
    a_lbl: int
    a_lf: dict[str, int]
    alpha: float
    best_template: str

    @classmethod
    def for_shape(cls, m: int, n: int) -> "FootprintReport":
        a, best = alpha(m, n)
        return cls(
            m=m,
            n=n,
            a_lbl=closed_form_lbl(m, n),
            a_lf={t: closed_form_lf(m, n, t) for t in LF_TEMPLATES},
            alpha=a,
            best_template=best,
        )


@dataclass
class VerifyReport:
    m: int
    n: int
    mismatches: list[str] = field(default_factory=list)
    results: dict[str, ScheduleResult] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def verify_against_simulation(
    m: int,
    n: int,
    hw: HardwareSpec | None = None,
    heads: int = 1,
) -> VerifyReport:
    """Run the schedule templates and compare against the closed forms.

    Checks exact peak-memory equality (in words), makespan equality between
    layer-by-layer and fused schedules, and the MN-word trace endpoints.
    """
    hw = hw or load_builtin("single64x64")
    report = VerifyReport(m, n)
    g = build_mhsa(m, n, heads)

    expected = {
        "lbl_memory_optimal": closed_form_lbl(m, n),
        "fuse_q_qkt": closed_form_lf(m, n, "fuse_q_qkt"),
        "fuse_qkt_qktv": closed_form_lf(m, n, "fuse_qkt_qktv"),
    }
    for template, want in expected.items():
        result = schedule_template(g, hw, template)
        report.results[template] = result
        got = max(result.trace.per_core_peak.values())
        if got != want:
            report.mismatches.append(
                f"peak[{template}] M={m} N={n}: simulated {got} != closed form {want}"
            )
        # every per-head trace must start and end at exactly MN words
        for core, points in result.trace.per_core.items():
            if not points:
                continue
            start, final = points[0][1], points[-1][1]
            if start != m * n or final != m * n:
                report.mismatches.append(
                    f"trace[{template}] M={m} N={n} {core}: endpoints "
                    f"({start}, {final}) != ({m * n}, {m * n})"
                )

    lbl_makespan = report.results["lbl_memory_optimal"].makespan
    for template in LF_TEMPLATES:
        fused_makespan = report.results[template].makespan
        if fused_makespan != lbl_makespan:
            report.mismatches.append(
                f"makespan[{template}] M={m} N={n}: {fused_makespan} != LBL {lbl_makespan}"
            )
    return report


@dataclass
class ScalingReport:
    short_makespan: float
    long_makespan: float
    ratio: float
    estimate_ratio: float
    measured_ratio: float
    mac_ratio: float
    avg_macs_per_cycle: float
    tolerance: float = 0.10

    @property
    def ok(self) -> bool:
        return (
            abs(self.ratio - self.estimate_ratio) <= self.tolerance * self.estimate_ratio
            and abs(self.ratio - self.mac_ratio) <= self.tolerance * self.mac_ratio
            and 2.0 <= self.avg_macs_per_cycle <= 6.0
        )


#: Reported model estimates and silicon measurements (MCycles) for the
#: GAP8 deployment at sequence lengths 81 and 128.
GAP8_ESTIMATE_MCYCLES = (1.692, 3.540)
GAP8_MEASURED_MCYCLES = (1.836, 3.905)


def seqlen_scaling_check(
    hw: HardwareSpec | None = None,
    n: int = 32,
    seq_short: int = 81,
    seq_long: int = 128,
    heads: int = 4,
) -> ScalingReport:
    """Compare predicted makespan scaling across sequence lengths on gap8like.

    Absolute silicon cycle counts are out of scope; the check is on the
    ratio between the two sequence lengths and on a loose average-MAC/cycle
    band around the measured 3.2.
    """
    hw = hw or load_builtin("gap8like")

    def run(seq: int) -> tuple[float, int]:
        g = build_mhsa(seq, n, heads)
        result = schedule_template(g, hw, "lbl_memory_optimal")
        return result.makespan, g.mac_count

    short_mk, short_macs = run(seq_short)
    long_mk, long_macs = run(seq_long)
    ratio = long_mk / short_mk
    est_ratio = GAP8_ESTIMATE_MCYCLES[1] / GAP8_ESTIMATE_MCYCLES[0]
    meas_ratio = GAP8_MEASURED_MCYCLES[1] / GAP8_MEASURED_MCYCLES[0]
    mac_ratio = long_macs / short_macs
    avg_macs = long_macs / long_mk
    return ScalingReport(
        short_makespan=short_mk,
        long_makespan=long_mk,
        ratio=ratio,
        estimate_ratio=est_ratio,
        measured_ratio=meas_ratio,
        mac_ratio=mac_ratio,
        avg_macs_per_cycle=avg_macs,
    )


# --------------------------------------------------------------------------
# report emission
# --------------------------------------------------------------------------


def report_csv(shapes: list[tuple[int, int]]) -> str:
    buf = io.StringIO()
    buf.write("M,N,A_LBL,A_LF_fuse_q_qkt,A_LF_fuse_qkt_qktv,alpha,best_template\n")
    for m, n in shapes:
        rep = FootprintReport.for_shape(m, n)
        buf.write(
            f"{m},{n},{rep.a_lbl},{rep.a_lf['fuse_q_qkt']},"
            f"{rep.a_lf['fuse_qkt_qktv']},{rep.alpha!r},{rep.best_template}\n"
        )
    return buf.getvalue()


def alpha_sweep(
    min_ratio: Fraction = Fraction(1, 64),
    max_ratio: Fraction = Fraction(64),
    points_per_octave: int = 4,
) -> list[tuple[Fraction, float, str]]:
    """Sample alpha over a geometric grid of M/N ratios."""
    out: list[tuple[Fraction, float, str]] = []
    current = float(min_ratio)
    while current <= float(max_ratio) * 1.0000001:
        frac = Fraction(current).limit_denominator(4096)
        m = frac.numerator * 64
        n = frac.denominator * 64
        a, best = alpha(m, n)
        out.append((frac, a, best))
        current *= 2.0 ** (1.0 / points_per_octave)
    return out


def alpha_sweep_csv(samples: list[tuple[Fraction, float, str]]) -> str:
    buf = io.StringIO()
    buf.write("m_over_n,alpha,best_template\n")
    for frac, a, best in samples:
        buf.write(f"{float(frac)!r},{a!r},{best}\n")
    return buf.getvalue()


def alpha_svg(samples: list[tuple[Fraction, float, str]]) -> str:
    """Log-x plot of alpha versus M/N (two-thirds plateau, then 3N/M decay)."""
    import math

    width, height, left, top, bottom = 720, 320, 60, 24, 40
    xs = [math.log2(float(f)) for f, _, _ in samples]
    ys = [a for _, a, _ in samples]
    x_lo, x_hi = min(xs), max(xs)
    sx = (width - left - 20) / (x_hi - x_lo or 1.0)
    sy = (height - top - bottom) / 1.0

    def xy(x: float, y: float) -> str:
        return f"{left + (x - x_lo) * sx:.2f},{height - bottom - y * sy:.2f}"

    pts = " ".join(xy(x, y) for x, y in zip(xs, ys))
    grid = []
    for p in range(int(x_lo), int(x_hi) + 1, 2):
        gx = left + (p - x_lo) * sx
        label = f"2^{p}" if p else "1"
        grid.append(
            f'<line x1="{gx:.1f}" y1="{top}" x2="{gx:.1f}" y2="{height - bottom}" '
            f'stroke="#eee"/><text x="{gx - 8:.1f}" y="{height - 18}">{label}</text>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        '<style>text{font-family:monospace;font-size:11px}</style>'
        f'<text x="{left}" y="14">relative memory footprint gain vs M/N</text>'
        + "".join(grid)
        + f'<line x1="{left}" y1="{height - bottom}" x2="{width - 10}" '
        f'y2="{height - bottom}" stroke="#999"/>'
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="#999"/>'
        f'<text x="8" y="{top + 6}">1.0</text><text x="8" y="{height - bottom}">0.0</text>'
        f'<polyline fill="none" stroke="#4c72b0" stroke-width="1.5" points="{pts}"/>'
        "</svg>\n"
    )
