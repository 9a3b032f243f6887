import pytest

from attnsched.hwmodel import (
    BUILTIN_PLATFORM_NAMES,
    HardwareConfigError,
    builtin_platforms,
    load_builtin,
    load_hardware,
)
from attnsched.workload import LayerKind

MINIMAL = """
name: tiny
cores:
  - id: c0
    array_rows: 2
    array_cols: 2
    macs_per_pe: 1
    register_file_words: {I1: 8, I2: 8, O: 8}
    supports: [matmul_weights, matmul_features, transpose, softmax]
memories:
  - id: m0
    role: staging
    capacity: 1024
    read_bw: 4
    write_bw: 4
    access_cost: 1.0
    serves: [I1, I2, O]
links: []
"""


def test_minimal_config_loads():
    spec = load_hardware(MINIMAL)
    assert spec.peak_macs_per_cycle == 4
    assert spec.resource_ids() == ["c0"]
    assert spec.feeds("I1") == 4


def test_builtin_single64x64():
    spec = load_builtin("single64x64")
    assert len(spec.cores) == 1
    assert len(spec.simd_units) == 1
    assert spec.peak_macs_per_cycle == 4096
    assert spec.feeds("I1") == 64
    assert spec.feeds("I2") == 4096


def test_builtin_quad64x64():
    spec = load_builtin("quad64x64")
    assert len(spec.cores) == 4
    assert spec.peak_macs_per_cycle == 4 * 4096
    assert len(spec.simd_units) == 4


def test_builtin_gap8like():
    spec = load_builtin("gap8like")
    assert len(spec.cores) == 8
    assert spec.peak_macs_per_cycle == 8
    # 51 bits/cycle over 8-bit words binds the staging feed path
    assert spec.feeds("I1") == pytest.approx(6.375)
    for kind in (LayerKind.SOFTMAX, LayerKind.MATMUL_FEATURES):
        assert spec.supporters(kind)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        load_builtin("pentacore")


def test_builtin_round_trips():
    for name, spec in builtin_platforms().items():
        again = load_hardware(spec.export_yaml())
        assert again.to_dict() == spec.to_dict(), name


def test_capability_gap_rejected():
    text = MINIMAL.replace(
        "supports: [matmul_weights, matmul_features, transpose, softmax]",
        "supports: [matmul_weights, matmul_features, transpose]",
    )
    with pytest.raises(HardwareConfigError, match="softmax"):
        load_hardware(text)


def test_parse_error_is_actionable():
    with pytest.raises(HardwareConfigError, match="unknown layer kind"):
        load_hardware(MINIMAL.replace("softmax", "gelu"))
    with pytest.raises(HardwareConfigError):
        load_hardware("just a string")


def test_bit_width_link_conversion():
    text = MINIMAL + """
"""
    spec = load_hardware(
        MINIMAL.replace("links: []", "links:\n  - {a: m0, b: m0, bw_bits: 51}"),
        word_bytes=1,
    )
    assert spec.links[0].bw == pytest.approx(6.375)
    spec2 = load_hardware(
        MINIMAL.replace("links: []", "links:\n  - {a: m0, b: m0, bw_bits: 64}"),
        word_bytes=2,
    )
    assert spec2.links[0].bw == pytest.approx(4.0)


def test_transfer_cycles():
    spec = load_builtin("quad64x64")
    assert spec.transfer_cycles("core0", "core0", 4096) == 0.0
    assert spec.transfer_cycles("core0", "simd0", 4096) == 0.0  # register-coupled
    # 32-cycle DMA setup plus 4096 words at 64 words/cycle
    assert spec.transfer_cycles("core0", "core1", 4096) == pytest.approx(96.0)
    assert spec.transfer_energy("core0", "core1", 100) == pytest.approx(800.0)
    assert spec.transfer_energy("core0", "simd0", 100) == 0.0


def test_home_core_mapping():
    spec = load_builtin("single64x64")
    assert spec.home_core("simd0") == "core0"
    assert spec.home_core("core0") == "core0"


def test_peak_macs_matches_sum_over_cores():
    for spec in builtin_platforms().values():
        assert spec.peak_macs_per_cycle == sum(
            c.array_rows * c.array_cols * c.macs_per_pe for c in spec.cores
        )


def test_builtin_names_stable():
    assert set(BUILTIN_PLATFORM_NAMES) == {"single64x64", "quad64x64", "gap8like"}
