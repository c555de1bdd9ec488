"""Scenario files: parsing, serialization, overrides and the scenario runner.

A scenario file is flat ``key = value`` text grouped by ``[section]`` headers,
with ``#`` and ``;`` comments. Keys before any header may come from any
section. ``[circuit]`` holds element lines for the dump scenario.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from oam_bench.config import get_settings
from oam_bench.exceptions import ConfigError, OamBenchError
from oam_bench.models.mode_space import FieldState, ModeSpace, Polarization, compose_all
from oam_bench.schemas.imperfections import NUMERIC_FIELDS
from oam_bench.schemas.metrics import MetricsReport
from oam_bench.schemas.scenario import KEY_SECTION, SECTION_KEYS, Scenario, ScenarioConfig
from oam_bench.schemas.sweeps import SweepVariable
from oam_bench.services.circuits import build_tbs, sign_finding
from oam_bench.services.elements import parse_element
from oam_bench.services.metrics import (
    EXPERIMENT_ER_DB,
    EXPERIMENT_ER_OAM_FLOOR_DB,
    EXPERIMENT_PD_TABLE,
    EXPERIMENT_VISIBILITY_FLOOR,
    MetricsService,
)
from oam_bench.services.serialization import dump_operator
from oam_bench.services.sweeps import (
    crossing_angles,
    fit_tuning_curve,
    grid,
    monte_carlo_polarization,
    sweep_imperfection,
    sweep_polarization,
    sweep_sagnac,
    sweep_tomography,
    sweep_tuning_batch,
)
from oam_bench.templates_config import templates
from oam_bench.utils.validation import validate_sigma, validate_transmittance

logger = logging.getLogger(__name__)

LOSS_KEY = re.compile(r"^loss_(\d+)_([hv])$")
SIGMA_KEY = re.compile(r"^sigma_([a-z0-9_]+)$")
LIST_KEYS = ("ports", "sr_th")
LOWER_KEYS = ("scenario", "device", "variable", "imperfection")
UPPER_KEYS = ("input_pol",)
# Optional keys where "none" means unset
NULLABLE_KEYS = ("seed", "start", "stop", "step", "repeats", "imperfection", "variable", "output_dir")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _strip_comment(line: str) -> str:
    return re.split(r"[#;]", line, maxsplit=1)[0].strip()


def _scalar(raw: str, nullable: bool = False):
    value = raw.strip().strip('"').strip("'")
    lowered = value.lower()
    if lowered in ("inf", "+inf", "infinity"):
        return math.inf
    if lowered == "-inf":
        return -math.inf
    if nullable and lowered in ("none", "null"):
        return None
    return value


def _classify_key(key: str, section: Optional[str]) -> Tuple[str, Optional[str]]:
    """Kind of a key ('plain', 'loss' or 'sigma') and the section it belongs to."""
    if LOSS_KEY.match(key):
        return "loss", "imperfections"
    if SIGMA_KEY.match(key):
        return "sigma", "imperfections"
    if key in KEY_SECTION:
        return "plain", KEY_SECTION[key]
    where = f" in [{section}]" if section else ""
    raise ConfigError(f"unknown key{where}", key=key)


def _pydantic_message(err: dict) -> str:
    msg = err.get("msg", "invalid value")
    return msg[len("Value error, "):] if msg.startswith("Value error, ") else msg


def parse_config(text: str) -> ScenarioConfig:
    """Validate scenario text into a ScenarioConfig; ConfigError names the offending line."""
    values: Dict[str, object] = {}
    port_loss: Dict[Tuple[int, Polarization], float] = {}
    imp_sigma: Dict[str, float] = {}
    circuit: List[Tuple[int, str]] = []
    line_of: Dict[str, int] = {}
    section: Optional[str] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue

        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header", line=lineno)
            name = line[1:-1].strip().lower()
            if name not in SECTION_KEYS:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            section = name
            continue

        if section == "circuit":
            circuit.append((lineno, line))
            continue

        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, raw_value = (part.strip() for part in line.split("=", 1))
        key = key.lower()

        try:
            kind, home = _classify_key(key, section)
        except ConfigError as e:
            raise ConfigError(e.message, line=lineno, key=key)
        if section is not None and home != section:
            raise ConfigError(f"unknown key in [{section}]", line=lineno, key=key)
        if key in line_of:
            raise ConfigError(f"duplicate key (first set on line {line_of[key]})", line=lineno, key=key)
        line_of[key] = lineno

        try:
            if kind == "loss":
                port, pol = LOSS_KEY.match(key).groups()
                port_loss[(int(port), Polarization(pol.upper()))] = validate_transmittance(float(raw_value))
                line_of.setdefault("port_loss", lineno)
            elif kind == "sigma":
                name = SIGMA_KEY.match(key).group(1)
                if name not in NUMERIC_FIELDS:
                    raise ValueError(f"no imperfection field named {name!r}")
                imp_sigma[name] = validate_sigma(float(raw_value))
                line_of.setdefault("imp_sigma", lineno)
            elif key in LIST_KEYS:
                values[key] = [_scalar(item) for item in raw_value.split(",") if item.strip()]
            else:
                value = _scalar(raw_value, nullable=key in NULLABLE_KEYS)
                if isinstance(value, str) and key in LOWER_KEYS:
                    value = value.lower()
                elif isinstance(value, str) and key in UPPER_KEYS:
                    value = value.upper()
                values[key] = value
        except ValueError as e:
            raise ConfigError(str(e), line=lineno, key=key)

    if port_loss:
        values["port_loss"] = port_loss
    if imp_sigma:
        values["imp_sigma"] = imp_sigma
    if circuit:
        values["circuit"] = [line for _, line in circuit]

    try:
        cfg = ScenarioConfig(**values)
    except ValidationError as e:
        err = e.errors()[0]
        key = str(err["loc"][0]) if err.get("loc") else None
        raise ConfigError(_pydantic_message(err), line=line_of.get(key), key=key)

    if circuit:
        space = ModeSpace(ports=cfg.ports, oam_range=cfg.oam_range)
        imp = cfg.imperfections()
        for lineno, line in circuit:
            try:
                parse_element(line, space, imp)
            except (ValueError, OamBenchError) as e:
                raise ConfigError(f"bad element line: {e}", line=lineno)

    logger.debug(f"Parsed {cfg.scenario.value} scenario with {len(values)} keys")
    return cfg


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def serialize_config(cfg: ScenarioConfig, exclude: Sequence[str] = ()) -> str:
    """Text that parse_config reads back into an equal config."""
    lines: List[str] = []
    for section, keys in SECTION_KEYS.items():
        body = []
        for key in keys:
            value = getattr(cfg, key)
            if value is None or key in exclude:
                continue
            body.append(f"{key} = {_format_value(value)}")
        if section == "imperfections":
            for (port, pol), transmittance in sorted(cfg.port_loss.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
                body.append(f"loss_{port}_{pol.value.lower()} = {_format_value(float(transmittance))}")
            for name in sorted(cfg.imp_sigma):
                body.append(f"sigma_{name} = {_format_value(float(cfg.imp_sigma[name]))}")
        if section == "circuit":
            body.extend(cfg.circuit)
        if body:
            lines.append(f"[{section}]")
            lines.extend(body)
    return "\n".join(lines) + "\n"


def apply_overrides(text: str, overrides: Sequence[str]) -> str:
    """Apply ``key=value`` (or ``section.key=value``) overrides to scenario text."""
    lines = text.splitlines()
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"override {override!r} is not key=value")
        key, value = (part.strip() for part in override.split("=", 1))
        key = key.lower()
        if "." in key:
            wanted_section, key = key.split(".", 1)
        else:
            wanted_section = None
        _, home = _classify_key(key, wanted_section)
        if wanted_section is not None and wanted_section != home:
            raise ConfigError(f"unknown key in [{wanted_section}]", key=key)

        section = None
        replaced = False
        for i, raw in enumerate(lines):
            stripped = _strip_comment(raw)
            if stripped.startswith("["):
                section = stripped[1:-1].strip().lower()
                continue
            if "=" not in stripped or section == "circuit":
                continue
            existing = stripped.split("=", 1)[0].strip().lower()
            if existing == key and section in (None, home):
                lines[i] = f"{key} = {value}"
                replaced = True
                break
        if not replaced:
            lines.extend([f"[{home}]", f"{key} = {value}"])
    return "\n".join(lines) + "\n"


@dataclass
class ScenarioRun:
    exit_code: int
    headline: str = ""
    report: MetricsReport = field(default_factory=MetricsReport)
    artifacts: List[Path] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


class _Writer:
    """Writes artifacts with a comment header embedding the resolved config."""

    def __init__(self, cfg: ScenarioConfig, out_dir: Path):
        self.out_dir = out_dir
        self.digits = get_settings().csv_digits
        config_text = serialize_config(cfg, exclude=("output_dir",))
        self.header = [f"# oam-bench {cfg.scenario.value}"] + [f"# {line}" for line in config_text.splitlines()]
        self.paths: List[Path] = []

    def csv(self, name: str, table: pd.DataFrame, index: bool = False) -> Path:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("\n".join(self.header) + "\n")
            table.to_csv(f, index=index, float_format=f"%.{self.digits}g", lineterminator="\n")
        self.paths.append(path)
        logger.info(f"Wrote {path}")
        return path

    def text(self, name: str, body: str, with_header: bool = False) -> Path:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8", newline="") as f:
            if with_header:
                f.write("\n".join(self.header) + "\n")
            f.write(body)
        self.paths.append(path)
        logger.info(f"Wrote {path}")
        return path


def _run_tuning(cfg: ScenarioConfig, space: ModeSpace, writer: _Writer, run: ScenarioRun) -> List[Tuple[str, str]]:
    spec = cfg.sweep_spec()
    states = [FieldState.basis_state(space, cfg.input_port, pol, 0) for pol in (Polarization.H, Polarization.V)]
    intensities = sweep_tuning_batch(spec, cfg.tbs_config(), states, (5, 6), space)
    thetas = grid(spec)

    chosen = 0 if cfg.input_pol == Polarization.H else 1
    i5, i6 = intensities[:, chosen, 0], intensities[:, chosen, 1]
    writer.csv("tuning.csv", pd.DataFrame({"theta2": thetas, "i5": i5, "i6": i6}))

    curves = [intensities[:, s, p] for s in range(2) for p in range(2)]
    er = MetricsService.tuning_extinction_summary(curves)
    crossings = crossing_angles(thetas, i5, i6)
    fit = fit_tuning_curve(thetas, i5)

    run.report = MetricsReport(er_db=er["mean"], guard_hit=er["guard_hit"], provenance=f"tuning port {cfg.input_port}")
    if er["guard_hit"]:
        run.warnings.append("tuning minimum below the numeric floor; ER is a guard value")
    guard = " (guard)" if er["guard_hit"] else ""
    run.headline = f"ER mean = {er['mean']:.3f} dB{guard}, crossing angles = " + ", ".join(f"{c:.2f}" for c in crossings)
    return [
        ("er_min_db", f"{er['min']:.6g}"),
        ("er_max_db", f"{er['max']:.6g}"),
        ("crossing_angles_deg", ", ".join(f"{c:.4f}" for c in crossings)),
        ("fit_amplitude", f"{fit['A']:.12g}"),
        ("fit_phase_deg", f"{fit['phi_deg']:.12g}"),
        ("fit_offset", f"{fit['C']:.12g}"),
        ("fit_residual", f"{fit['residual']:.3g}"),
        ("experiment_er_db", "mean {mean:g} / min {min:g} / max {max:g}".format(**EXPERIMENT_ER_DB)),
    ]


def _run_imperfection_sweep(cfg: ScenarioConfig, space: ModeSpace, writer: _Writer, run: ScenarioRun) -> List[Tuple[str, str]]:
    spec = cfg.sweep_spec()
    tbs = cfg.tbs_config()
    name = cfg.imperfection

    tables, details, worst = [], [], []
    for sr_th in cfg.sr_th:
        table = sweep_imperfection(spec, name, tbs, sr_th, cfg.input_port, space)
        table.insert(0, "sr_th", sr_th)
        tables.append(table)
        k = int(table["pd"].idxmax())
        pd_max, value = float(table["pd"][k]), float(table["value"][k])
        worst.append((pd_max, sr_th, value))
        details.append((f"pd_max_sr_{sr_th:g}", f"{pd_max:.6g} at {name}={value:g}"))

    writer.csv("pd_imperfection.csv", pd.concat(tables, ignore_index=True).rename(columns={"value": name}))

    pd_max, sr_th, value = max(worst)
    run.report = MetricsReport(
        pd=pd_max,
        seed=cfg.seed,
        provenance=f"polarization port {cfg.input_port} over {name} {spec.start:g}..{spec.stop:g}, worst at sr_th={sr_th:g}",
    )
    run.headline = f"max PD over {name} = " + ", ".join(f"{sr:g}: {p * 100:.4f}%" for p, sr, _ in worst)
    return details


def _run_polarization(cfg: ScenarioConfig, space: ModeSpace, writer: _Writer, run: ScenarioRun) -> List[Tuple[str, str]]:
    if cfg.variable == SweepVariable.IMPERFECTION:
        return _run_imperfection_sweep(cfg, space, writer, run)
    spec = cfg.sweep_spec()
    tbs = cfg.tbs_config()
    reference = EXPERIMENT_PD_TABLE[cfg.input_port]

    tables, details, pds, stds = [], [], [], []
    for sr_th in cfg.sr_th:
        sweep = sweep_polarization(spec, tbs, sr_th, cfg.input_port, space)
        pd_value, pd_std = sweep.pd, None
        if spec.is_monte_carlo:
            mc = monte_carlo_polarization(spec, tbs, sr_th, cfg.input_port, space)
            pd_value, pd_std = mc.mean, mc.std
        table = sweep.table.copy()
        table.insert(0, "sr_th", sr_th)
        tables.append(table)
        pds.append(pd_value)
        stds.append(pd_std)

        line = f"{pd_value:.6g}"
        if pd_std is not None:
            line += f" +/- {pd_std:.3g}"
        if sr_th in reference:
            ref_pd, ref_std = reference[sr_th]
            match = MetricsService.order_of_magnitude_match(pd_value, ref_pd)
            line += f" (experiment {ref_pd:g} +/- {ref_std:g}, same order: {'yes' if match else 'no'})"
        details.append((f"pd_sr_{sr_th:g}", line))

    writer.csv("pd.csv", pd.concat(tables, ignore_index=True))

    order = np.argsort(cfg.sr_th)[::-1]
    ordered = [pds[i] for i in order]
    rising = all(b > a for a, b in zip(ordered, ordered[1:]))
    details.append(("pd_rises_as_sr_falls", "yes" if rising else "no"))

    worst = int(np.argmax(pds))
    run.report = MetricsReport(
        pd=pds[worst],
        pd_std=stds[worst],
        seed=cfg.seed,
        provenance=f"polarization port {cfg.input_port}, worst at sr_th={cfg.sr_th[worst]:g}",
    )
    run.headline = "PD = " + ", ".join(f"{sr:g}: {p * 100:.4f}%" for sr, p in zip(cfg.sr_th, pds))
    return details


def _run_tomography(cfg: ScenarioConfig, space: ModeSpace, writer: _Writer, run: ScenarioRun) -> List[Tuple[str, str]]:
    result = sweep_tomography(
        cfg.device, cfg.slm_crosstalk_db, cfg.tbs_config(), space, cfg.input_pol, cfg.slm_crosstalk_reach,
    )
    writer.csv("tomo.csv", result.matrix, index=True)

    worst = min(result.er_oam_db)
    run.report = MetricsReport(er_oam_db=worst, guard_hit=result.all_guarded, provenance=f"tomography device={cfg.device.value}")
    if result.all_guarded:
        run.headline = f"all rows ER_OAM > {worst:.0f} dB (guard)"
    else:
        floor_ok = all(db > EXPERIMENT_ER_OAM_FLOOR_DB for db in result.er_oam_db)
        run.headline = f"min ER_OAM = {worst:.3f} dB, all rows above {EXPERIMENT_ER_OAM_FLOOR_DB:g} dB: {'yes' if floor_ok else 'no'}"

    leak = max(result.boundary_leakage)
    if leak > 0:
        run.warnings.append(f"intensity leaking past |l| = {space.oam_range}: up to {leak:.3g}")
    details = [
        (f"er_oam_db_l{l:+d}", f"{db:.6g}{' (guard)' if hit else ''}")
        for l, db, hit in zip(space.oam_values, result.er_oam_db, result.guard_hit)
    ]
    details.append(("boundary_leakage_max", f"{leak:.6g}"))
    return details


def _run_sagnac(cfg: ScenarioConfig, space: ModeSpace, writer: _Writer, run: ScenarioRun) -> List[Tuple[str, str]]:
    spec = cfg.sweep_spec()
    table = sweep_sagnac(spec, cfg.sagnac_config(), space, cfg.theta2_step)
    writer.csv("sagnac.csv", table)

    values = np.concatenate([table["v_port1"].to_numpy(), table["v_port2"].to_numpy()])
    mean_v = float(np.mean(values))
    run.report = MetricsReport(
        visibility=mean_v,
        visibility_std=float(np.std(values)),
        seed=cfg.seed,
        provenance="sagnac",
    )
    run.headline = f"mean V = {mean_v:.6f}"

    details = []
    for port in (1, 2):
        column = table[f"v_port{port}"]
        details += [
            (f"v_port{port}_min", f"{column.min():.12g} at theta0={table['theta0'][column.idxmin()]:g}"),
            (f"v_port{port}_max", f"{column.max():.12g} at theta0={table['theta0'][column.idxmax()]:g}"),
        ]
    details.append(("above_experiment_floor", "yes" if values.min() > EXPERIMENT_VISIBILITY_FLOOR else "no"))
    return details


def _run_dump(cfg: ScenarioConfig, space: ModeSpace, writer: _Writer, run: ScenarioRun) -> List[Tuple[str, str]]:
    if cfg.circuit:
        imp = cfg.imperfections()
        op = compose_all(parse_element(line, space, imp) for line in cfg.circuit)
    else:
        op = build_tbs(cfg.tbs_config(), space)
        finding = sign_finding(cfg.theta2, space)
        writer.text("sign_report.md", templates.get_template("sign_report.md.j2").render(finding=finding))

    writer.text("operator.txt", dump_operator(op))
    norm = op.spectral_norm
    run.headline = f"{op.label}: dimension {space.dimension}, spectral norm {norm:.12g}"
    if norm > 1 + 1e-12:
        run.warnings.append(f"operator has gain: spectral norm {norm:.12g}")
    return [
        ("input_ports", ", ".join(str(p) for p in sorted(op.input_ports))),
        ("output_ports", ", ".join(str(p) for p in sorted(op.output_ports))),
        ("isometry_on_inputs", "yes" if op.is_isometry() else "no"),
        ("oam_leakage", f"{op.oam_leakage():.3g}"),
    ]


RUNNERS = {
    Scenario.TUNING: _run_tuning,
    Scenario.POLARIZATION: _run_polarization,
    Scenario.TOMOGRAPHY: _run_tomography,
    Scenario.SAGNAC: _run_sagnac,
    Scenario.DUMP: _run_dump,
}


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[str] = None) -> ScenarioRun:
    """Run one scenario and write its artifacts; I/O and runtime failures give exit 2."""
    cfg = cfg.resolved()
    out = Path(out_dir or cfg.output_dir)
    run = ScenarioRun(exit_code=EXIT_OK)
    logger.info(f"Running {cfg.scenario.value} scenario into {out}")

    try:
        out.mkdir(parents=True, exist_ok=True)
        space = ModeSpace(ports=cfg.ports, oam_range=cfg.oam_range)
        writer = _Writer(cfg, out)
        details = RUNNERS[cfg.scenario](cfg, space, writer, run)

        for line in run.warnings:
            logger.warning(line)

        writer.text("metrics.csv", f"{MetricsReport.csv_header()}\n{run.report.to_csv_row(writer.digits)}\n", with_header=True)

        metrics = [(name, value) for name, value in run.report.model_dump().items()
                   if name not in ("provenance", "seed") and value is not None]
        summary = templates.get_template("summary.txt.j2").render(
            scenario=cfg.scenario.value,
            seed=cfg.seed,
            headline=run.headline,
            metrics=metrics,
            details=details,
            warnings=run.warnings,
            artifacts=[p.name for p in writer.paths] + ["summary.txt"],
        )
        writer.text("summary.txt", summary)
    except OSError as e:
        logger.error(f"Could not write artifacts to {out}: {e}")
        run.exit_code = EXIT_RUNTIME
        return run
    except OamBenchError as e:
        logger.error(f"{cfg.scenario.value} scenario failed: {e}")
        run.exit_code = EXIT_RUNTIME
        return run

    run.artifacts = list(writer.paths)
    logger.info(f"{cfg.scenario.value} scenario finished: {run.headline}")
    return run
