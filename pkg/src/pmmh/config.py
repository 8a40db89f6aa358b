"""Flat ``key = value`` run configuration.

One assignment per line, ``#`` starts a comment. Recognised keys::

    model            sv | lg                       (sv)
    T, N, M          series length, particles, iterations   (500, 100, 10000)
    scheme           multinomial | residual | systematic     (systematic)
    seed             integer in [0, 2**64)          (drawn at run time if absent)
    threads          worker threads                 (1; PMMH_THREADS overrides)
    burn_in          fraction in [0, 1)             (0.1)
    thin             trajectory storage stride      (100)
    ess_threshold    resample when ESS < this * N; >= 1 means every step (1.0)
    out_dir          output directory               (out)
    data_path        observation file; simulate from param.* when absent
    param.<name>     model parameter value (simulation truth / fixed values)
    prior.<name>.<field>   field in dist, loc, scale, low, high
    proposal.<name>.sd     random-walk scale in chain coordinates
    init.<name>            pinned chain start
    evidence.R, evidence.K         numerator replicates, prior draws (10, 1000)
    evidence.theta_star            median | mean (median)
    evidence.conditional           exact | conjugate (exact)
"""

import math
from dataclasses import dataclass, field, fields

from .exceptions import ConfigError
from .models import get_model
from .priors import DEFAULT_PRIORS, Marginal, PriorSpec, ProposalSpec
from .smc import SCHEMES

_INT = {"T", "N", "M", "seed", "threads", "thin", "evidence.R", "evidence.K"}
_FLOAT = {"burn_in", "ess_threshold"}
_STR = {"model", "scheme", "out_dir", "data_path", "evidence.theta_star", "evidence.conditional"}
_PRIOR_FIELDS = ("dist", "loc", "scale", "low", "high")

_ATTR = {
    "evidence.R": "evidence_R",
    "evidence.K": "evidence_K",
    "evidence.theta_star": "evidence_theta_star",
    "evidence.conditional": "evidence_conditional",
}


@dataclass
class RunConfig:
    model: str = "sv"
    T: int = 500
    N: int = 100
    M: int = 10000
    scheme: str = "systematic"
    seed: int = None
    threads: int = 1
    burn_in: float = 0.1
    thin: int = 100
    ess_threshold: float = 1.0
    out_dir: str = "out"
    data_path: str = None
    params: dict = field(default_factory=dict)
    prior: dict = field(default_factory=dict)
    proposal: dict = field(default_factory=dict)
    init: dict = field(default_factory=dict)
    evidence_R: int = 10
    evidence_K: int = 1000
    evidence_theta_star: str = "median"
    evidence_conditional: str = "exact"

    # --- derived objects ---------------------------------------------------
    def model_obj(self):
        return get_model(self.model)

    def model_params(self):
        model = self.model_obj()
        return model.params_type(**self.params)

    def prior_spec(self):
        marginals = {n: m for n, m in DEFAULT_PRIORS[self.model].items()}
        for name, over in self.prior.items():
            if name in marginals and "dist" not in over:
                base = marginals[name].to_dict()
            elif name in marginals and over.get("dist") == marginals[name].dist:
                base = marginals[name].to_dict()
            else:
                base = {}
            base.update(over)
            marginals[name] = Marginal(**base)
        order = self.model_obj().param_names
        return PriorSpec({n: marginals[n] for n in order if n in marginals})

    def proposal_spec(self):
        names = self.prior_spec().names
        spec = ProposalSpec.default(names, self.model_obj().log_params)
        spec.sds.update({n: sd for n, sd in self.proposal.items() if n in spec.sds})
        return spec

    def to_text(self):
        """Serialize with every key explicit; ``parse_config`` inverts this."""
        lines = []
        for f in fields(self):
            name = f.name
            value = getattr(self, name)
            if name in ("params", "prior", "proposal", "init"):
                continue
            key = {v: k for k, v in _ATTR.items()}.get(name, name)
            if value is None:
                continue
            lines.append(f"{key} = {_fmt(value)}")
        for n, v in sorted(self.params.items()):
            lines.append(f"param.{n} = {_fmt(v)}")
        for n, over in sorted(self.prior.items()):
            for fld in _PRIOR_FIELDS:
                if fld in over:
                    lines.append(f"prior.{n}.{fld} = {_fmt(over[fld])}")
        for n, v in sorted(self.proposal.items()):
            lines.append(f"proposal.{n}.sd = {_fmt(v)}")
        for n, v in sorted(self.init.items()):
            lines.append(f"init.{n} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = {k: (dict(x) if isinstance(x, dict) else x) for k, x in v.items()} \
                if isinstance(v, dict) else v
        return d


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key, raw, lineno):
    def fail(what):
        return ConfigError(f"line {lineno}: key {key!r}: {what} (got {raw!r})")

    kind = _kind(key)
    if kind is None:
        return None
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise fail("expected an integer") from None
    if kind == "float":
        try:
            v = float(raw)
        except ValueError:
            raise fail("expected a number") from None
        if math.isnan(v):
            raise fail("NaN is not allowed")
        return v
    return raw


def _kind(key):
    if key in _INT:
        return "int"
    if key in _FLOAT:
        return "float"
    if key in _STR:
        return "str"
    parts = key.split(".")
    if parts[0] in ("param", "init") and len(parts) == 2 and parts[1]:
        return "float"
    if parts[0] == "proposal" and len(parts) == 3 and parts[2] == "sd" and parts[1]:
        return "float"
    if parts[0] == "prior" and len(parts) == 3 and parts[1] and parts[2] in _PRIOR_FIELDS:
        return "str" if parts[2] == "dist" else "float"
    return None


def parse_config(text, overrides=()):
    """Parse config text (plus ``key=value`` overrides) into a validated RunConfig."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        _store(entries, key, raw, lineno)
    for i, item in enumerate(overrides, start=1):
        if "=" not in item:
            raise ConfigError(f"override {i}: expected key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        _store(entries, key, raw, f"override {i}")
    return _build(entries)


def _store(entries, key, raw, lineno):
    where = f"line {lineno}" if isinstance(lineno, int) else lineno
    if _kind(key) is None:
        raise ConfigError(f"{where}: unknown key {key!r}")
    if not raw:
        raise ConfigError(f"{where}: key {key!r} has no value")
    value = _convert(key, raw, lineno if isinstance(lineno, int) else where)
    entries[key] = (value, where)


def _build(entries):
    cfg = RunConfig()

    def err(key, what):
        where = entries[key][1]
        return ConfigError(f"{where}: key {key!r}: {what}")

    for key, (value, _) in entries.items():
        if "." in key and key not in _ATTR:
            group, rest = key.split(".", 1)
            if group == "param":
                cfg.params[rest] = value
            elif group == "init":
                cfg.init[rest] = value
            elif group == "proposal":
                cfg.proposal[rest.split(".")[0]] = value
            elif group == "prior":
                name, fld = rest.split(".")
                cfg.prior.setdefault(name, {})[fld] = value
        else:
            setattr(cfg, _ATTR.get(key, key), value)

    checks = [
        ("model", cfg.model in ("sv", "lg"), "must be 'sv' or 'lg'"),
        ("scheme", cfg.scheme in SCHEMES, f"must be one of {SCHEMES}"),
        ("N", cfg.N >= 1, "must be >= 1"),
        ("M", cfg.M >= 0, "must be >= 0"),
        ("T", cfg.T >= 1, "must be >= 1"),
        ("threads", cfg.threads >= 1, "must be >= 1"),
        ("thin", cfg.thin >= 1, "must be >= 1"),
        ("burn_in", 0.0 <= cfg.burn_in < 1.0, "must lie in [0, 1)"),
        ("ess_threshold", 0.0 <= cfg.ess_threshold, "must be >= 0"),
        ("seed", cfg.seed is None or 0 <= cfg.seed < 2**64, "must lie in [0, 2**64)"),
        ("evidence.R", cfg.evidence_R >= 1, "must be >= 1"),
        ("evidence.K", cfg.evidence_K >= 1, "must be >= 1"),
        ("evidence.theta_star", cfg.evidence_theta_star in ("median", "mean"),
         "must be 'median' or 'mean'"),
        ("evidence.conditional", cfg.evidence_conditional in ("exact", "conjugate"),
         "must be 'exact' or 'conjugate'"),
    ]
    for key, ok, what in checks:
        if not ok:
            if key in entries:
                raise err(key, what)
            raise ConfigError(f"key {key!r}: {what}")

    names = get_model(cfg.model).param_names
    for key in entries:
        group, _, rest = key.partition(".")
        if group in ("param", "init", "prior", "proposal"):
            pname = rest.split(".")[0]
            if pname not in names:
                raise err(key, f"{pname!r} is not a {cfg.model} parameter {names}")
    try:
        cfg.model_params()
    except (TypeError, ValueError) as exc:
        bad = next((k for k in entries if k.startswith("param.")), "param")
        raise ConfigError(f"{entries.get(bad, (None, 'config'))[1]}: invalid parameter values: {exc}") from None
    try:
        prior = cfg.prior_spec()
        spec = cfg.proposal_spec()
    except (TypeError, ValueError) as exc:
        bad = next((k for k in entries if k.startswith(("prior.", "proposal."))), "prior")
        raise ConfigError(f"{entries.get(bad, (None, 'config'))[1]}: {exc}") from None
    for name in cfg.proposal:
        if name not in spec.sds:
            raise err(f"proposal.{name}.sd", f"{name!r} has no prior, so it is not sampled")
    for name in cfg.init:
        if name not in prior.names:
            raise err(f"init.{name}", f"{name!r} has no prior, so it is not sampled")
    return cfg


def load_config(path, overrides=()):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)
