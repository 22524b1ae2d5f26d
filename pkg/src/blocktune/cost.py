"""FLOP accounting for forward and selection-dependent backward passes,
plus the energy metrics used to compare selections.

Conventions: an affine layer m->n costs 2*m*n + n forward (multiply-adds
plus bias adds); ReLU and the residual join cost 1 FLOP per element.
Backward: the activation-gradient path costs 2*m*n per affine for every
layer from the loss down to the front-most selected block inclusive, and
parameter gradients cost 2*m*n + n per affine for selected blocks only.
The loss layer itself is not counted.

Energy uses the net power draw (operational minus standby): measured
per-step time/energy tables are only consistent with E = (P_op - P_idle) * t,
so that is the reading implemented here.  The energy-saving rate is
reported magnitude-positive: ES = (E_full - E_block) / E_full * 100.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import fmean

from .errors import InputError, UsageError
from .model import BlockNet, check_selection

MODES = ("estimated_time", "measured_time")


@dataclass(frozen=True)
class CostModel:
    power_operational_w: float = 4.20
    power_standby_w: float = 4.00
    throughput_flops_per_s: float = 1.0e9
    mode: str = "estimated_time"

    def __post_init__(self):
        if not (self.power_operational_w >= self.power_standby_w >= 0):
            raise InputError(
                f"need power_operational >= power_standby >= 0, got "
                f"{self.power_operational_w} / {self.power_standby_w}")
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "estimated_time" and self.throughput_flops_per_s <= 0:
            raise InputError("estimated_time mode needs throughput > 0")

    @property
    def net_power_w(self) -> float:
        return self.power_operational_w - self.power_standby_w


@dataclass
class CostReport:
    """Per-training-step (one sample forward+backward) cost of a selection."""

    flops_forward: int
    flops_backward: int
    time_s: float
    energy_j: float
    energy_saving_pct: float | None = None


def affine_flops(m: int, n: int) -> int:
    """Forward cost of one affine layer: 2*m*n multiply-adds + n bias adds."""
    return 2 * m * n + n


def _unit_forward(net: BlockNet) -> dict[str, int]:
    s = net.spec
    H, L = s.hidden_dim, s.layers_per_block
    per_block = L * affine_flops(H, H) + L * H + H  # affines + ReLUs + skip add
    units = {"stem": affine_flops(s.input_dim, H), "fc": affine_flops(H, s.n_classes)}
    for k in range(s.n_res_blocks):
        units[f"block{k + 1}"] = per_block
    return units


def _unit_backward_activation(net: BlockNet) -> dict[str, int]:
    s = net.spec
    H, L = s.hidden_dim, s.layers_per_block
    per_block = L * 2 * H * H + L * H + H  # affine dX + ReLU masks + skip join
    units = {"stem": 2 * s.input_dim * H, "fc": 2 * H * s.n_classes}
    for k in range(s.n_res_blocks):
        units[f"block{k + 1}"] = per_block
    return units


def _unit_backward_param(net: BlockNet) -> dict[str, int]:
    s = net.spec
    H, L = s.hidden_dim, s.layers_per_block
    per_block = L * (2 * H * H + H)  # dW + db per affine
    units = {"stem": 2 * s.input_dim * H + H, "fc": 2 * H * s.n_classes + s.n_classes}
    for k in range(s.n_res_blocks):
        units[f"block{k + 1}"] = per_block
    return units


def forward_flops(net: BlockNet) -> int:
    """Per-sample forward cost of the whole net."""
    return sum(_unit_forward(net).values())


def backward_flops(net: BlockNet, selection) -> int:
    """Per-sample backward cost for training exactly the selected blocks."""
    act, par = backward_flops_breakdown(net, selection)
    return act + par


def backward_flops_breakdown(net: BlockNet, selection) -> tuple[int, int]:
    """(activation-path FLOPs, parameter-gradient FLOPs) for a selection."""
    sel = check_selection(net, selection)
    depth = {bid: i for i, bid in enumerate(net.block_ids)}
    front = min(depth[b] for b in sel)
    act_units = _unit_backward_activation(net)
    par_units = _unit_backward_param(net)
    act = sum(f for bid, f in act_units.items() if depth[bid] >= front)
    par = sum(par_units[bid] for bid in sel)
    return act, par


def energy(time_s: float, model: CostModel) -> float:
    """E = net power * time."""
    if time_s < 0:
        raise InputError(f"time must be >= 0, got {time_s}")
    return model.net_power_w * time_s


def energy_saving(e_block: float, e_full: float) -> float:
    """Energy-saving rate in percent versus full fine-tuning (positive = savings)."""
    if e_full <= 0:
        raise InputError(f"reference energy must be > 0, got {e_full}")
    return (e_full - e_block) / e_full * 100.0


def block_avg(values) -> float:
    """Arithmetic mean of block-wise results (excluding full fine-tuning)."""
    values = list(values)
    if not values:
        raise UsageError("block_avg needs at least one value")
    return fmean(values)


def estimate_step_cost(net: BlockNet, selection, model: CostModel) -> CostReport:
    """Estimated-time cost of one training step (one sample fwd+bwd)."""
    if model.mode != "estimated_time":
        raise UsageError("estimate_step_cost requires estimated_time mode")
    fwd = forward_flops(net)
    bwd = backward_flops(net, selection)
    t = (fwd + bwd) / model.throughput_flops_per_s
    return CostReport(flops_forward=fwd, flops_backward=bwd,
                      time_s=t, energy_j=energy(t, model))


def measured_step_cost(net: BlockNet, selection, model: CostModel,
                       time_s: float) -> CostReport:
    """Cost report from a measured wall-clock step time."""
    return CostReport(flops_forward=forward_flops(net),
                      flops_backward=backward_flops(net, selection),
                      time_s=time_s, energy_j=energy(time_s, model))


def selection_cost_table(net: BlockNet, selections: dict[str, frozenset],
                         model: CostModel,
                         reference: str = "full") -> dict[str, CostReport]:
    """Per-step cost of each named selection, with ES filled against the
    reference selection (by convention, full fine-tuning)."""
    if reference not in selections:
        raise UsageError(f"reference selection {reference!r} not in table")
    table = {name: estimate_step_cost(net, sel, model)
             for name, sel in selections.items()}
    e_full = table[reference].energy_j
    for name, report in table.items():
        if name != reference:
            report.energy_saving_pct = energy_saving(report.energy_j, e_full)
    return table
