"""Serialization: observation CSVs, run configs, and result reports.

All formats are strict: unknown CSV columns and unknown config keys are
errors, never silently ignored.  Numbers are written with 17 significant
digits so every finite double round-trips exactly; absent values render
as the literal token ``null``.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass

from .estimate import GaugeRule, RhoEstimate, ValidationReport, VolatilityScale
from .model import Dataset, FitResult, HestonParams, MarketObservation, PolicyCoefficients, Stage1Params
from .nls import SolverOptions
from .simulate import GenerationSpec, PathConfig, StructuralSpec

__all__ = [
    "RunConfig",
    "read_dataset",
    "write_dataset",
    "write_report",
    "parse_config",
]

_CSV_COLUMNS = ("pi_star", "mu", "r")


def _fmt(value) -> str:
    """Render one report value: 17-significant-digit floats, bare ints/strings, null."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}" if math.isfinite(value) else "null"
    return str(value)


def read_dataset(path) -> Dataset:
    """Parse an observation CSV.

    Schema: UTF-8, comma-delimited, header line with columns ``pi_star``,
    ``mu``, ``r`` and optionally ``label`` in any order; nothing else.  A
    present label column tags the dataset as a time series, otherwise it
    is a cross-section.  Error messages reference physical file lines
    (the header is line 1).
    """
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"empty dataset: {path} has no header")
    header = [h.strip() for h in rows[0]]
    for name in header:
        if name not in _CSV_COLUMNS and name != "label":
            raise ValueError(f"unknown column: {name}")
    for name in _CSV_COLUMNS:
        if name not in header:
            raise ValueError(f"missing column: {name}")
    if len(set(header)) != len(header):
        raise ValueError(f"duplicate column in header of {path}")
    has_label = "label" in header
    col = {name: header.index(name) for name in header}

    observations = []
    for offset, row in enumerate(rows[1:]):
        line = offset + 2
        if not row or all(cell.strip() == "" for cell in row):
            continue
        if len(row) != len(header):
            raise ValueError(f"row parse error at row {line}: expected {len(header)} fields, got {len(row)}")
        values = {}
        for name in _CSV_COLUMNS:
            cell = row[col[name]].strip()
            try:
                values[name] = float(cell)
            except ValueError:
                raise ValueError(f"row parse error at row {line}: field {name} is not a number: {cell!r}") from None
        label = None
        if has_label:
            raw = row[col["label"]].strip()
            label = raw if raw else None
        try:
            observations.append(MarketObservation(label=label, **values))
        except ValueError as exc:
            raise ValueError(f"row parse error at row {line}: {exc}") from None
    if not observations:
        raise ValueError(f"empty dataset: {path} has no data rows")
    mode = "time-series" if has_label else "cross-section"
    return Dataset(observations=tuple(observations), source=str(path), mode=mode)


def write_dataset(data: Dataset, path) -> None:
    """Write a Dataset as CSV; inverse of :func:`read_dataset` for finite values."""
    with_label = data.mode == "time-series"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = (["label"] if with_label else []) + list(_CSV_COLUMNS)
        writer.writerow(header)
        for o in data.observations:
            row = [o.label if o.label is not None else ""] if with_label else []
            row += [_fmt(o.pi_star), _fmt(o.mu), _fmt(o.r)]
            writer.writerow(row)


def _fit_lines(section: str, fit: FitResult, param_names: tuple[str, ...]) -> list[str]:
    lines = [f"[{section}]"]
    values = fit.params.as_array() if hasattr(fit.params, "as_array") else fit.params
    for name, value in zip(param_names, values):
        lines.append(f"{name} = {_fmt(float(value))}")
    for i, name in enumerate(param_names):
        se = None if fit.standard_errors is None else fit.standard_errors[i]
        lines.append(f"se_{name} = {_fmt(se)}")
    lines.append(f"residual_norm = {_fmt(fit.residual_norm)}")
    lines.append(f"iterations = {_fmt(fit.iterations)}")
    lines.append(f"converged = {_fmt(fit.converged)}")
    lines.append(f"message = {fit.message if fit.message else 'null'}")
    return lines


def _diag_value(diags: frozenset[str]) -> str:
    return ",".join(sorted(diags)) if diags else "none"


def write_report(
    path,
    *,
    stage1: FitResult | None = None,
    stage2: FitResult | None = None,
    gauge: GaugeRule | None = None,
    rho: RhoEstimate | None = None,
    scale: VolatilityScale | None = None,
    validation: ValidationReport | None = None,
) -> None:
    """Emit the line-oriented result report.

    Sections appear in a fixed order (stage1, stage2, rho,
    volatility_scale, diagnostics, validation), each with a fixed key
    order, so identical inputs produce byte-identical files.
    """
    lines: list[str] = []
    if stage1 is not None:
        lines += _fit_lines("stage1", stage1, ("beta1", "beta2", "beta3"))
        lines.append("")
    if stage2 is not None:
        lines += _fit_lines("stage2", stage2, ("beta4", "beta5", "beta6"))
        lines.append(f"gamma_hat = {_fmt(float(stage2.params.beta4))}")
        lines.append(f"gauge = {gauge.variant if gauge is not None else 'null'}")
        pin = None if gauge is None else gauge.pin_value
        lines.append(f"gauge_pin_value = {_fmt(pin)}")
        lines.append("")
    if rho is not None:
        lines.append("[rho]")
        lines.append(f"rho_hat = {_fmt(rho.rho_hat)}")
        lines.append(f"in_range = {_fmt(rho.in_range)}")
        lines.append("")
    if scale is not None:
        lines.append("[volatility_scale]")
        lines.append(f"beta3_hat = {_fmt(scale.beta3_hat)}")
        lines.append(f"sigma_bar = {_fmt(scale.sigma_bar)}")
        lines.append(f"sqrt_sigma_bar = {_fmt(scale.sqrt_sigma_bar)}")
        lines.append(f"abs_err_vs_variance = {_fmt(scale.abs_err_vs_variance)}")
        lines.append(f"abs_err_vs_volatility = {_fmt(scale.abs_err_vs_volatility)}")
        lines.append(f"closer_to = {scale.closer_to}")
        lines.append("")
    if stage1 is not None or stage2 is not None or rho is not None:
        lines.append("[diagnostics]")
        if stage1 is not None:
            lines.append(f"stage1 = {_diag_value(stage1.diagnostics)}")
        if stage2 is not None:
            lines.append(f"stage2 = {_diag_value(stage2.diagnostics)}")
        if rho is not None:
            lines.append(f"rho = {_diag_value(rho.diagnostics)}")
        lines.append("")
    if validation is not None:
        v = validation
        lines.append("[validation]")
        lines.append(f"replications = {_fmt(v.replications)}")
        lines.append(f"converged = {_fmt(v.n_converged)}")
        lines.append(f"failed = {_fmt(v.n_failed)}")
        lines.append(f"convergence_rate = {_fmt(v.convergence_rate)}")
        for i, name in enumerate(v.param_names):
            truth = None if v.truth is None else float(v.truth.as_array()[i])
            lines.append(f"truth_{name} = {_fmt(truth)}")
            lines.append(f"bias_{name} = {_fmt(None if v.bias is None else v.bias[i])}")
            lines.append(f"rmse_{name} = {_fmt(None if v.rmse is None else v.rmse[i])}")
            lines.append(f"coverage_{name} = {_fmt(None if v.coverage is None else v.coverage[i])}")
        lines.append(f"coverage_evaluated = {_fmt(v.coverage_evaluated)}")
        lines.append(f"beta3_mean = {_fmt(v.beta3_mean)}")
        lines.append(f"stage2_gamma_mean = {_fmt(v.stage2_gamma_mean)}")
        lines.append(f"stage2_converged = {_fmt(v.stage2_n_converged)}")
        if v.scale is not None:
            lines.append(f"beta3_mean_vs_sigma_bar = {_fmt(v.scale.abs_err_vs_variance)}")
            lines.append(f"beta3_mean_vs_sqrt_sigma_bar = {_fmt(v.scale.abs_err_vs_volatility)}")
            lines.append(f"closer_to = {v.scale.closer_to}")
        lines.append("")
    text = "\n".join(lines)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc


_SECTION_KEYS = {
    "run": {"mode", "input", "output", "dataset_output", "seed", "gauge", "beta3_hat", "alpha_ratio"},
    "solver": {"max_iterations", "g_tol", "x_tol", "lambda0", "lambda_factor", "lambda_max"},
    "generation": {"kind", "n", "noise", "e_min", "e_max", "base_rate", "beta1", "beta2", "beta3", "replications"},
    "heston": {"mu", "r", "alpha", "beta_rev", "gamma", "rho", "sigma_bar"},
    "policy": {"alpha0", "alpha1", "alpha2"},
    "path": {"horizon", "dt", "x0"},
}
_MODES = ("simulate", "fit", "volvol", "validate", "pipeline")


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run description, ready for the CLI dispatcher."""

    mode: str
    output: str
    input: str | None = None
    dataset_output: str | None = None
    seed: int = 0
    gauge_variant: str = "pin-beta5"
    beta3_hat: float | None = None
    alpha_ratio: float | None = None
    solver: SolverOptions = SolverOptions()
    generation_kind: str | None = None
    generation: GenerationSpec | StructuralSpec | None = None
    replications: int | None = None
    x0: float | None = None


class _Sections:
    """Typed, strict access to parsed config sections."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser

    def has(self, section: str) -> bool:
        return self.parser.has_section(section)

    def get(self, section: str, key: str, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        return default

    def number(self, section: str, key: str, default=None, required=False, kind=float):
        raw = self.get(section, key)
        if raw is None:
            if required:
                raise ValueError(f"missing required key: [{section}] {key}")
            return default
        try:
            if kind is int:
                return int(raw)
            return float(raw)
        except ValueError:
            raise ValueError(
                f"type error: [{section}] {key} expects {'an integer' if kind is int else 'a number'}, got {raw!r}"
            ) from None


def _check_known_keys(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ValueError(f"unknown section: {section}")
        for key in parser.options(section):
            if key not in _SECTION_KEYS[section]:
                raise ValueError(f"unknown key: {key}")


def _solver_options(sec: _Sections) -> SolverOptions:
    if not sec.has("solver"):
        return SolverOptions()
    defaults = SolverOptions()
    return SolverOptions(
        max_iterations=sec.number("solver", "max_iterations", defaults.max_iterations, kind=int),
        g_tol=sec.number("solver", "g_tol", defaults.g_tol),
        x_tol=sec.number("solver", "x_tol", defaults.x_tol),
        lambda0=sec.number("solver", "lambda0", defaults.lambda0),
        lambda_factor=sec.number("solver", "lambda_factor", defaults.lambda_factor),
        lambda_max=sec.number("solver", "lambda_max", defaults.lambda_max),
    )


def _generation_spec(sec: _Sections, mode: str):
    if not sec.has("generation"):
        raise ValueError(f"missing required section for mode {mode}: [generation]")
    kind = sec.get("generation", "kind", "model-implied")
    if kind not in ("model-implied", "structural"):
        raise ValueError(f"type error: [generation] kind must be model-implied or structural, got {kind!r}")
    replications = sec.number("generation", "replications", None, kind=int)
    if kind == "model-implied":
        stage1 = Stage1Params(
            beta1=sec.number("generation", "beta1", required=True),
            beta2=sec.number("generation", "beta2", required=True),
            beta3=sec.number("generation", "beta3", required=True),
        )
        spec = GenerationSpec(
            stage1=stage1,
            n=sec.number("generation", "n", required=True, kind=int),
            noise=sec.number("generation", "noise", 0.0),
            e_interval=(
                sec.number("generation", "e_min", 0.01),
                sec.number("generation", "e_max", 0.10),
            ),
            base_rate=sec.number("generation", "base_rate", 0.02),
        )
        return kind, spec, replications
    for section in ("heston", "policy", "path"):
        if not sec.has(section):
            raise ValueError(f"missing required section for structural generation: [{section}]")
    heston = HestonParams(
        mu=sec.number("heston", "mu", required=True),
        r=sec.number("heston", "r", required=True),
        alpha=sec.number("heston", "alpha", required=True),
        beta_rev=sec.number("heston", "beta_rev", required=True),
        gamma=sec.number("heston", "gamma", required=True),
        rho=sec.number("heston", "rho", required=True),
        sigma_bar=sec.number("heston", "sigma_bar", required=True),
    )
    policy = PolicyCoefficients(
        alpha0=sec.number("policy", "alpha0", required=True),
        alpha1=sec.number("policy", "alpha1", required=True),
        alpha2=sec.number("policy", "alpha2", required=True),
    )
    path_cfg = PathConfig(
        horizon=sec.number("path", "horizon", required=True),
        dt=sec.number("path", "dt", required=True),
        seed=0,
        n_paths=1,
    )
    x0 = sec.number("path", "x0", required=True)
    spec = StructuralSpec(heston=heston, policy=policy, path=path_cfg, x0=x0)
    return kind, spec, replications


def parse_config(path) -> RunConfig:
    """Parse and validate a run config.

    Format: ``key = value`` lines under ``[section]`` headers.  Unknown
    sections and keys are errors, as are missing keys required by the
    declared mode; ``#`` starts a comment line.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ValueError(f"config syntax error in {path}: {exc}") from None
    _check_known_keys(parser)
    sec = _Sections(parser)

    mode = sec.get("run", "mode")
    if mode is None:
        raise ValueError("missing required key: [run] mode")
    if mode not in _MODES:
        raise ValueError(f"type error: [run] mode must be one of {', '.join(_MODES)}; got {mode!r}")

    output = sec.get("run", "output")
    if output is None:
        raise ValueError(f"missing required key for mode {mode}: [run] output")
    seed = sec.number("run", "seed", 0, kind=int)
    if seed < 0:
        raise ValueError("type error: [run] seed must be >= 0")
    gauge_variant = sec.get("run", "gauge", "pin-beta5")
    if gauge_variant not in ("free", "pin-beta5", "pin-beta6"):
        raise ValueError(f"type error: [run] gauge must be free, pin-beta5 or pin-beta6; got {gauge_variant!r}")
    beta3_hat = sec.number("run", "beta3_hat", None)
    alpha_ratio = sec.number("run", "alpha_ratio", None)
    input_path = sec.get("run", "input")
    dataset_output = sec.get("run", "dataset_output")
    solver = _solver_options(sec)

    generation_kind = None
    generation = None
    replications = None
    if mode in ("simulate", "validate", "pipeline"):
        generation_kind, generation, replications = _generation_spec(sec, mode)
    if mode in ("fit", "volvol") and input_path is None:
        raise ValueError(f"missing required key for mode {mode}: [run] input")
    if mode == "validate":
        if replications is None:
            raise ValueError("missing required key for mode validate: [generation] replications")
        if replications < 2:
            raise ValueError("type error: [generation] replications must be >= 2")
    if mode == "pipeline" and dataset_output is None:
        raise ValueError("missing required key for mode pipeline: [run] dataset_output")
    if beta3_hat is not None and beta3_hat <= 0.0:
        raise ValueError("type error: [run] beta3_hat must be > 0")
    if beta3_hat is not None and gauge_variant != "free":
        raise ValueError("pin gauges take their pin value from a stage-1 fit; with beta3_hat given, use gauge = free")
    if beta3_hat is not None and alpha_ratio is not None:
        raise ValueError("rho estimation needs the stage-1 beta2; drop beta3_hat or alpha_ratio")
    if alpha_ratio is not None and alpha_ratio == 0.0:
        raise ValueError("type error: [run] alpha_ratio must be nonzero")

    return RunConfig(
        mode=mode,
        output=output,
        input=input_path,
        dataset_output=dataset_output,
        seed=seed,
        gauge_variant=gauge_variant,
        beta3_hat=beta3_hat,
        alpha_ratio=alpha_ratio,
        solver=solver,
        generation_kind=generation_kind,
        generation=generation,
        replications=replications,
    )
