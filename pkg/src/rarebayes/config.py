"""Run configuration files (TOML).

Grammar::

    mode = "update"          # update | compare | demo-bias | validate
    seed = 0                 # master seed
    output = "out"           # artifact directory

    [sus]        p0, n, max_levels
    [proposal]   width
    [stopping]   tol, n_inner, inner_max_levels
    [demo]       c_relative = [...] or c_values = [...], reference_samples
    [validate]   reference_samples, evidence_draws, alpha

    [[model]]                # repeat for compare mode
    name = "shear_identifiable"
    label = "identifiable"   # optional, defaults to name
    seed = 3                 # optional per-model master seed
    [model.params]           # model parameters
    [[model.prior]]          # one marginal per parameter (optional for built-ins)
    kind = "lognormal"
    mode = 1.3
    std = 1.0

Every section except ``[[model]]`` is optional. Unknown keys are errors and
are reported with the line they appear on.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bus import StoppingConfig
from .errors import ConfigError
from .mcmc import ProposalSpec
from .models import build_model, shear_default_prior
from .priors import PriorSpec, marginal_from_dict
from .sus import SusConfig

__all__ = ["ModelBlock", "DemoConfig", "ValidateConfig", "RunConfig", "parse_config", "load_config", "dump_config"]

MODES = ("update", "compare", "demo-bias", "validate")
_TOP_KEYS = {"mode", "seed", "output", "sus", "proposal", "stopping", "demo", "validate", "model"}
_SECTION_KEYS = {
    "sus": {"p0", "n", "max_levels"},
    "proposal": {"width"},
    "stopping": {"tol", "n_inner", "inner_max_levels"},
    "demo": {"c_relative", "c_values", "reference_samples"},
    "validate": {"reference_samples", "evidence_draws", "alpha"},
}
_MODEL_KEYS = {"name", "label", "seed", "params", "prior"}


@dataclass(frozen=True)
class ModelBlock:
    name: str
    params: dict = field(default_factory=dict)
    prior: Optional[tuple] = None
    label: Optional[str] = None
    seed: Optional[int] = None

    @property
    def display_name(self) -> str:
        return self.label or self.name

    def build(self):
        """Instantiate (model, PriorSpec)."""
        model = build_model(self.name, self.params)
        if self.prior is not None:
            prior = PriorSpec(tuple(marginal_from_dict(m) for m in self.prior))
        elif self.name.startswith("shear_"):
            prior = shear_default_prior(self.name == "shear_identifiable")
        else:
            prior = PriorSpec.standard(model.dim)
        if prior.dim != model.dim:
            raise ConfigError(f"model {self.display_name!r} has {model.dim} parameters but "
                              f"{prior.dim} prior marginals")
        return model, prior


@dataclass(frozen=True)
class DemoConfig:
    c_relative: Optional[tuple] = (0.1, 1.0, 10.0)
    c_values: Optional[tuple] = None
    reference_samples: int = 5000


@dataclass(frozen=True)
class ValidateConfig:
    reference_samples: int = 5000
    evidence_draws: int = 100_000
    alpha: float = 0.01


@dataclass(frozen=True)
class RunConfig:
    mode: str
    models: tuple
    seed: int = 0
    output: str = "out"
    sus: SusConfig = SusConfig()
    proposal: ProposalSpec = ProposalSpec()
    stopping: StoppingConfig = StoppingConfig()
    demo: DemoConfig = DemoConfig()
    validate: ValidateConfig = ValidateConfig()
    # explicit inner cap, kept so serialization reproduces the input
    inner_max_levels: Optional[int] = None

    def with_seed(self, seed: int) -> "RunConfig":
        return _replace(self, seed=seed, sus=_replace(self.sus, seed=seed))

    def with_output(self, output: str) -> "RunConfig":
        return _replace(self, output=output)


def _replace(obj, **kw):
    from dataclasses import replace

    return replace(obj, **kw)


def _line_of(text: str, key: str, section: Optional[str] = None) -> Optional[int]:
    """First line assigning ``key`` (inside ``section`` when given)."""
    current = None
    pat = re.compile(rf"^\s*(\"?){re.escape(key)}\1\s*=")
    head = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?")
    for i, line in enumerate(text.splitlines(), start=1):
        m = head.match(line)
        if m:
            current = m.group(1)
            if section is None and current == key:
                return i
            continue
        if (section is None and current is None) or (section is not None and current == section):
            if pat.match(line):
                return i
    if section is not None:
        for i, line in enumerate(text.splitlines(), start=1):
            m = head.match(line)
            if m and m.group(1) == section:
                return i
    return None


def _check_keys(table: dict, allowed: set, text: str, section: Optional[str], where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}", _line_of(text, key, section))


def _number(value, kind, label: str, text: str, section: str, key: str):
    line = _line_of(text, key, section)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{label} must be a number, got {value!r}", line)
    if kind is int:
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"{label} must be an integer, got {value!r}", line)
            value = int(value)
        return value
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{label} must be finite, got {value!r}", line)
    return value


def parse_config(text: str, mode: Optional[str] = None) -> RunConfig:
    """Parse and validate configuration text.

    ``mode`` (the CLI subcommand) overrides the file's ``mode`` key.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed config: {exc}", int(m.group(1)) if m else None) from None
    _check_keys(raw, _TOP_KEYS, text, None, "top level")
    for name, allowed in _SECTION_KEYS.items():
        if name in raw:
            if not isinstance(raw[name], dict):
                raise ConfigError(f"[{name}] must be a table", _line_of(text, name))
            _check_keys(raw[name], allowed, text, name, f"[{name}]")

    mode = mode or raw.get("mode", "update")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {list(MODES)}, got {mode!r}", _line_of(text, "mode"))
    seed = _number(raw.get("seed", 0), int, "seed", text, None, "seed")
    if seed < 0 or seed >= 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}", _line_of(text, "seed"))
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigError("output must be a non-empty string", _line_of(text, "output"))

    def section_value(sec, key, kind, default):
        if key not in raw.get(sec, {}):
            return default
        return _number(raw[sec][key], kind, f"{sec}.{key}", text, sec, key)

    def build(sec, factory, **kw):
        try:
            return factory(**kw)
        except ConfigError as exc:
            # point at the key the message names, else at the section header
            line = _line_of(text, sec)
            for key in raw.get(sec, {}):
                if re.search(rf"\b{re.escape(key)}\b", str(exc), re.IGNORECASE):
                    line = _line_of(text, key, sec)
                    break
            raise ConfigError(str(exc), line) from None

    sus = build("sus", SusConfig, p0=section_value("sus", "p0", float, 0.1), n=section_value("sus", "n", int, 1000),
                max_levels=section_value("sus", "max_levels", int, 10), seed=seed)
    proposal = build("proposal", ProposalSpec, width=section_value("proposal", "width", float, 1.0))
    inner_cap = section_value("stopping", "inner_max_levels", int, None)
    stopping = build("stopping", StoppingConfig, tol=section_value("stopping", "tol", float, 1e-8),
                     n_inner=section_value("stopping", "n_inner", int, 1000), p0=sus.p0, max_levels=inner_cap)
    if stopping.n_inner != sus.n:
        build("stopping", SusConfig, p0=sus.p0, n=stopping.n_inner, max_levels=stopping.max_levels, seed=seed)

    demo_raw = raw.get("demo", {})
    if "c_relative" in demo_raw and "c_values" in demo_raw:
        raise ConfigError("[demo] takes c_relative or c_values, not both", _line_of(text, "c_values", "demo"))
    demo_kw = {}
    for key in ("c_relative", "c_values"):
        if key in demo_raw:
            vals = demo_raw[key]
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"demo.{key} must be a non-empty list", _line_of(text, key, "demo"))
            vals = tuple(_number(v, float, f"demo.{key}", text, "demo", key) for v in vals)
            if any(v <= 0 for v in vals):
                raise ConfigError(f"demo.{key} entries must be positive", _line_of(text, key, "demo"))
            demo_kw[key] = vals
    if "c_values" in demo_kw:
        demo_kw.setdefault("c_relative", None)
    demo = DemoConfig(**demo_kw, reference_samples=section_value("demo", "reference_samples", int, 5000))
    validate = ValidateConfig(
        reference_samples=section_value("validate", "reference_samples", int, 5000),
        evidence_draws=section_value("validate", "evidence_draws", int, 100_000),
        alpha=section_value("validate", "alpha", float, 0.01),
    )
    if demo.reference_samples < 100 or validate.reference_samples < 100:
        raise ConfigError("reference_samples must be at least 100", _line_of(text, "reference_samples"))
    if validate.evidence_draws < 1000:
        raise ConfigError("validate.evidence_draws must be at least 1000", _line_of(text, "evidence_draws", "validate"))
    if not 0 < validate.alpha < 1:
        raise ConfigError("validate.alpha must lie in (0, 1)", _line_of(text, "alpha", "validate"))

    models = _parse_models(raw, text)
    if mode == "compare" and len(models) < 2:
        raise ConfigError("compare mode needs at least two [[model]] blocks", _line_of(text, "mode"))
    if mode != "compare" and len(models) != 1:
        raise ConfigError(f"{mode} mode takes exactly one [[model]] block, got {len(models)}", _line_of(text, "model"))
    labels = [m.display_name for m in models]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"model labels must be unique, got {labels}", _line_of(text, "label", "model"))

    return RunConfig(mode, tuple(models), seed, output, sus, proposal, stopping, demo, validate, inner_cap)


def _parse_models(raw: dict, text: str) -> list:
    blocks = raw.get("model")
    if blocks is None:
        raise ConfigError("at least one [[model]] block is required")
    if isinstance(blocks, dict):
        blocks = [blocks]
    out = []
    for i, block in enumerate(blocks):
        where = f"[[model]] #{i + 1}"
        line = _nth_header_line(text, "model", i)
        if not isinstance(block, dict):
            raise ConfigError(f"{where} must be a table", line)
        for key in block:
            if key not in _MODEL_KEYS:
                raise ConfigError(f"unknown key {key!r} in {where}", _line_of(text, key, "model") or line)
        name = block.get("name")
        if not isinstance(name, str):
            raise ConfigError(f"{where} needs a string 'name'", line)
        params = block.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{where}: params must be a table", line)
        prior = block.get("prior")
        if prior is not None:
            if not isinstance(prior, list) or not all(isinstance(p, dict) for p in prior):
                raise ConfigError(f"{where}: prior must be a list of [[model.prior]] tables", line)
            prior = tuple(dict(p) for p in prior)
        seed = block.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ConfigError(f"{where}: seed must be a non-negative integer", _line_of(text, "seed", "model") or line)
        label = block.get("label")
        if label is not None and (not isinstance(label, str) or not label or "/" in label):
            raise ConfigError(f"{where}: label must be a non-empty string without '/'", line)
        mb = ModelBlock(name, dict(params), prior, label, seed)
        try:
            mb.build()
        except ConfigError as exc:
            at = _first_line_after(text, line, "model.params") or line
            for key in params:
                if re.search(rf"\b{re.escape(key)}\b", str(exc)):
                    at = _key_line_after(text, at, key) or at
                    break
            raise ConfigError(f"{where}: {exc}", at) from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}", line) from None
        out.append(mb)
    return out


def _nth_header_line(text: str, name: str, n: int) -> Optional[int]:
    count = -1
    for i, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"^\s*\[\[\s*{re.escape(name)}\s*\]\]", line):
            count += 1
            if count == n:
                return i
    return None


def _first_line_after(text: str, start: Optional[int], header: str) -> Optional[int]:
    if start is None:
        return None
    for i, line in enumerate(text.splitlines(), start=1):
        if i > start and re.match(rf"^\s*\[\[?\s*{re.escape(header)}\s*\]\]?", line):
            return i
        if i > start and re.match(r"^\s*\[\[\s*model\s*\]\]", line):
            return None
    return None


def _key_line_after(text: str, start: Optional[int], key: str) -> Optional[int]:
    # first assignment of ``key`` after line ``start``, before the next header
    pat = re.compile(rf"^\s*(\"?){re.escape(key)}\1\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if start is None or i <= start:
            continue
        if re.match(r"^\s*\[", line):
            return None
        if pat.match(line):
            return i
    return None


def load_config(path, mode: Optional[str] = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), mode)


def to_dict(config: RunConfig) -> dict:
    out = {
        "mode": config.mode,
        "seed": config.seed,
        "output": config.output,
        "sus": {"p0": config.sus.p0, "n": config.sus.n, "max_levels": config.sus.max_levels},
        "proposal": {"width": config.proposal.width},
        "stopping": {"tol": config.stopping.tol, "n_inner": config.stopping.n_inner},
        "demo": {"reference_samples": config.demo.reference_samples},
        "validate": {
            "reference_samples": config.validate.reference_samples,
            "evidence_draws": config.validate.evidence_draws,
            "alpha": config.validate.alpha,
        },
        "model": [],
    }
    if config.inner_max_levels is not None:
        out["stopping"]["inner_max_levels"] = config.inner_max_levels
    if config.demo.c_values is not None:
        out["demo"]["c_values"] = list(config.demo.c_values)
    elif config.demo.c_relative is not None:
        out["demo"]["c_relative"] = list(config.demo.c_relative)
    for m in config.models:
        block = {"name": m.name}
        if m.label is not None:
            block["label"] = m.label
        if m.seed is not None:
            block["seed"] = m.seed
        block["params"] = dict(m.params)
        if m.prior is not None:
            block["prior"] = [dict(p) for p in m.prior]
        out["model"].append(block)
    return out


def dump_config(config: RunConfig) -> str:
    """Serialize to TOML; ``parse_config(dump_config(c)) == c``."""
    return tomli_w.dumps(to_dict(config))
