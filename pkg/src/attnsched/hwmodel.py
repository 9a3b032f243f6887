"""Multi-core accelerator platform models.

A platform is a set of MAC cores (PE arrays), optional SIMD post-processing
units attached to cores, memory levels and links.  Specs are immutable after
loading and freely shared between concurrent scheduling runs.

Link bandwidths given in bits/cycle are converted to words/cycle at load time
using the workload's word width, so the scheduler works in words throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import yaml

from .workload import SCHEDULABLE_KINDS, LayerKind

OPERANDS = ("I1", "I2", "O")


class HardwareConfigError(ValueError):
    pass


def _parse_kinds(names: list[str], where: str) -> set[LayerKind]:
    kinds = set()
    for name in names:
        try:
            kinds.add(LayerKind(name))
        except ValueError as exc:
            raise HardwareConfigError(f"{where}: unknown layer kind {name!r}") from exc
    return kinds


@dataclass(frozen=True)
class Core:
    id: str
    array_rows: int
    array_cols: int
    macs_per_pe: int
    register_file_words: dict[str, int]
    supports: frozenset[LayerKind]

    def __post_init__(self) -> None:
        if self.array_rows * self.array_cols * self.macs_per_pe < 1:
            raise HardwareConfigError(f"core {self.id}: needs at least one MAC")

    @property
    def peak_macs(self) -> int:
        return self.array_rows * self.array_cols * self.macs_per_pe

    @property
    def register_budget(self) -> int:
        return sum(self.register_file_words.values())


@dataclass(frozen=True)
class SimdUnit:
    id: str
    lanes: int
    supports: frozenset[LayerKind]
    attached_to: str

    def __post_init__(self) -> None:
        if self.lanes < 1:
            raise HardwareConfigError(f"simd {self.id}: lanes must be >= 1")


@dataclass(frozen=True)
class MemoryLevel:
    id: str
    capacity: int
    read_bw: float
    write_bw: float
    access_cost: float
    serves: frozenset[str]
    role: str = "staging"  # register | staging | backing

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise HardwareConfigError(f"memory {self.id}: capacity must be > 0")
        if self.read_bw <= 0 or self.write_bw <= 0:
            raise HardwareConfigError(f"memory {self.id}: bandwidths must be > 0")
        if self.role not in ("register", "staging", "backing"):
            raise HardwareConfigError(f"memory {self.id}: unknown role {self.role!r}")
        bad = set(self.serves) - set(OPERANDS)
        if bad:
            raise HardwareConfigError(f"memory {self.id}: unknown operands {sorted(bad)}")


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    bw: float  # words/cycle
    setup: int = 0
    energy_per_word: float = 0.0

    def __post_init__(self) -> None:
        if self.bw <= 0:
            raise HardwareConfigError(f"link {self.a}-{self.b}: bandwidth must be > 0")
        if self.energy_per_word < 0:
            raise HardwareConfigError(f"link {self.a}-{self.b}: negative energy")


@dataclass
class HardwareSpec:
    name: str
    cores: list[Core]
    simd_units: list[SimdUnit]
    memories: list[MemoryLevel]
    links: list[Link]
    clock: str = ""
    word_bytes: int = 1
    #: default words/cycle for unlisted core-to-core forwarding paths
    default_intercore_bw: float | None = None

    def __post_init__(self) -> None:
        self._core_by_id = {c.id: c for c in self.cores}
        self._simd_by_id = {s.id: s for s in self.simd_units}
        if len(self._core_by_id) != len(self.cores):
            raise HardwareConfigError("duplicate core ids")
        for s in self.simd_units:
            if s.attached_to not in self._core_by_id:
                raise HardwareConfigError(
                    f"simd {s.id}: attached to unknown core {s.attached_to!r}"
                )
        self._links = {}
        for link in self.links:
            self._links[(link.a, link.b)] = link
            self._links[(link.b, link.a)] = link

    # --- resources -------------------------------------------------------

    def resource_ids(self) -> list[str]:
        return [c.id for c in self.cores] + [s.id for s in self.simd_units]

    def is_core(self, rid: str) -> bool:
        return rid in self._core_by_id

    def core(self, rid: str) -> Core:
        return self._core_by_id[rid]

    def simd(self, rid: str) -> SimdUnit:
        return self._simd_by_id[rid]

    def home_core(self, rid: str) -> str:
        """Core owning a resource (a SIMD unit belongs to its host core)."""
        if rid in self._simd_by_id:
            return self._simd_by_id[rid].attached_to
        return rid

    def supports(self, rid: str, kind: LayerKind) -> bool:
        if rid in self._core_by_id:
            return kind in self._core_by_id[rid].supports
        return kind in self._simd_by_id[rid].supports

    def supporters(self, kind: LayerKind) -> list[str]:
        return [rid for rid in self.resource_ids() if self.supports(rid, kind)]

    @property
    def peak_macs_per_cycle(self) -> int:
        return sum(c.peak_macs for c in self.cores)

    # --- data movement ----------------------------------------------------

    def transfer_cycles(self, src: str, dst: str, words: int) -> float:
        """Cycles to forward ``words`` from resource src to resource dst.

        Movement within one core (including its attached SIMD units) is free:
        those paths are register-coupled.
        """
        if self.home_core(src) == self.home_core(dst):
            return 0.0
        link = self._links.get((self.home_core(src), self.home_core(dst)))
        if link is None:
            bw = self.default_intercore_bw
            if bw is None:
                bw = float(min(c.array_cols for c in self.cores))
            setup = 0
        else:
            bw, setup = link.bw, link.setup
        return setup + words / bw

    def transfer_energy(self, src: str, dst: str, words: int) -> float:
        """Energy to forward ``words`` between cores (0 inside one core)."""
        if self.home_core(src) == self.home_core(dst):
            return 0.0
        link = self._links.get((self.home_core(src), self.home_core(dst)))
        if link is None:
            return 0.0
        return words * link.energy_per_word

    def feeds(self, operand: str) -> float:
        """Effective words/cycle at which a core can stream one operand.

        The bottleneck of the serving staging/backing levels and of any
        memory-to-memory link on record.
        """
        bws = [
            lvl.read_bw
            for lvl in self.memories
            if operand in lvl.serves and lvl.role == "staging"
        ]
        staging_ids = {lvl.id for lvl in self.memories if lvl.role == "staging"}
        bws += [
            link.bw
            for link in self.links
            if link.a in staging_ids and link.b in staging_ids
        ]
        return min(bws) if bws else float("inf")

    def level_cost(self, role: str, operand: str | None = None) -> float:
        """Access cost (energy units/word) of a level by role.

        For staging levels the operand selects among split memories; the
        first matching level wins.
        """
        for lvl in self.memories:
            if lvl.role != role:
                continue
            if operand is None or operand in lvl.serves:
                return lvl.access_cost
        return 0.0

    # --- validation and serialization --------------------------------------

    def capability_gaps(self, kinds: set[LayerKind] | frozenset[LayerKind] = SCHEDULABLE_KINDS) -> list[LayerKind]:
        return sorted(
            (k for k in kinds if not self.supporters(k)), key=lambda k: k.value
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "clock": self.clock,
            "cores": [
                {
                    "id": c.id,
                    "array_rows": c.array_rows,
                    "array_cols": c.array_cols,
                    "macs_per_pe": c.macs_per_pe,
                    "register_file_words": dict(sorted(c.register_file_words.items())),
                    "supports": sorted(k.value for k in c.supports),
                }
                for c in self.cores
            ],
            "simd": [
                {
                    "id": s.id,
                    "lanes": s.lanes,
                    "attached_to": s.attached_to,
                    "supports": sorted(k.value for k in s.supports),
                }
                for s in self.simd_units
            ],
            "memories": [
                {
                    "id": m.id,
                    "capacity": m.capacity,
                    "read_bw": m.read_bw,
                    "write_bw": m.write_bw,
                    "access_cost": m.access_cost,
                    "serves": sorted(m.serves),
                    "role": m.role,
                }
                for m in self.memories
            ],
            "links": [
                {
                    "a": link.a,
                    "b": link.b,
                    "bw": link.bw,
                    "setup": link.setup,
                    "energy_per_word": link.energy_per_word,
                }
                for link in self.links
            ],
        }

    def export_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _link_from_dict(raw: dict, word_bytes: int, where: str) -> Link:
    if "bw_bits" in raw:
        bw = float(raw["bw_bits"]) / (8 * word_bytes)
    elif "bw" in raw:
        bw = float(raw["bw"])
    else:
        raise HardwareConfigError(f"{where}: link needs 'bw' or 'bw_bits'")
    return Link(
        a=str(raw["a"]),
        b=str(raw["b"]),
        bw=bw,
        setup=int(raw.get("setup", 0)),
        energy_per_word=float(raw.get("energy_per_word", 0.0)),
    )


def load_hardware(text: str, word_bytes: int = 1) -> HardwareSpec:
    """Parse and validate a hardware config.

    Raises :class:`HardwareConfigError` on malformed fields and on capability
    gaps (a schedulable layer kind supported by no core or SIMD unit).
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise HardwareConfigError(f"config parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise HardwareConfigError("hardware config must be a mapping")

    cores = []
    for c in raw.get("cores", []):
        where = f"core {c.get('id', '?')}"
        cores.append(
            Core(
                id=str(c["id"]),
                array_rows=int(c["array_rows"]),
                array_cols=int(c["array_cols"]),
                macs_per_pe=int(c.get("macs_per_pe", 1)),
                register_file_words={
                    str(k): int(v)
                    for k, v in c.get("register_file_words", {}).items()
                },
                supports=frozenset(_parse_kinds(c.get("supports", []), where)),
            )
        )
    if not cores:
        raise HardwareConfigError("config declares no cores")

    simd_units = [
        SimdUnit(
            id=str(s["id"]),
            lanes=int(s["lanes"]),
            supports=frozenset(_parse_kinds(s.get("supports", []), f"simd {s.get('id', '?')}")),
            attached_to=str(s["attached_to"]),
        )
        for s in raw.get("simd", [])
    ]
    memories = [
        MemoryLevel(
            id=str(m["id"]),
            capacity=int(m["capacity"]),
            read_bw=float(m["read_bw"]),
            write_bw=float(m["write_bw"]),
            access_cost=float(m.get("access_cost", 0.0)),
            serves=frozenset(str(op) for op in m.get("serves", OPERANDS)),
            role=str(m.get("role", "staging")),
        )
        for m in raw.get("memories", [])
    ]
    links = [
        _link_from_dict(l, word_bytes, f"link {i}") for i, l in enumerate(raw.get("links", []))
    ]

    spec = HardwareSpec(
        name=str(raw.get("name", "unnamed")),
        cores=cores,
        simd_units=simd_units,
        memories=memories,
        links=links,
        clock=str(raw.get("clock", "")),
        word_bytes=word_bytes,
        default_intercore_bw=(
            float(raw["intercore_bw"]) if "intercore_bw" in raw else None
        ),
    )
    gaps = spec.capability_gaps()
    if gaps:
        raise HardwareConfigError(
            "no core or SIMD unit supports: " + ", ".join(k.value for k in gaps)
        )
    return spec


BUILTIN_PLATFORM_NAMES = ("single64x64", "quad64x64", "gap8like")


def load_builtin(name: str, word_bytes: int | None = None) -> HardwareSpec:
    """Load one of the builtin platforms shipped with the package."""
    if name not in BUILTIN_PLATFORM_NAMES:
        raise KeyError(
            f"unknown platform {name!r}; builtins: {', '.join(BUILTIN_PLATFORM_NAMES)}"
        )
    text = resources.files("attnsched").joinpath(f"platforms/{name}.yaml").read_text()
    return load_hardware(text, word_bytes=1 if word_bytes is None else word_bytes)


def builtin_platforms() -> dict[str, HardwareSpec]:
    return {name: load_builtin(name) for name in BUILTIN_PLATFORM_NAMES}


def builtin_platform_text(name: str) -> str:
    if name not in BUILTIN_PLATFORM_NAMES:
        raise KeyError(f"unknown platform {name!r}")
    return resources.files("attnsched").joinpath(f"platforms/{name}.yaml").read_text()
