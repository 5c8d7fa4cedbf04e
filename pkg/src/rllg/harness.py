"""Training loop, evaluation protocol, learning-curve metrics and output files."""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .approximator import save_network
from .environments import CONTINUOUS_ENVS, ENVIRONMENTS, make_env
from .guides import NullGuide, make_guide
from .sac import ReplayBuffer, SacAgent, SacConfig, save_agent
from .strategies import KINDS, Scheduler, Strategy, StrategyConfig, compose_action, update_step

# Guides that pull toward reward; every other registered guide is an emergency controller.
ATTRACTIVE_ENVS = ("point-mass",)
SMOOTHING = 0.9


@dataclass
class RunConfig:
    """Everything that determines a training run.

    ``None`` fields take environment- and agent-specific defaults from
    :meth:`resolve`. ``env_params`` overrides environment constants, e.g.
    ``{"max_episode_steps": 200}``.
    """

    env: str = "safe-cartpole-swingup"
    agent: str = "sac"
    epochs: int = 100
    steps_per_epoch: int = 1000
    updates_per_epoch: int = 1000
    eval_trials: int = 5
    seed: int = 0
    hidden: tuple | None = None
    policy_activation: str = "relu"
    q_activation: str | None = None
    lr: float = 3e-4
    gamma: float | None = None
    tau: float = 0.005
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    init_alpha: float = 1.0
    schedule: str | None = None
    beta0: float | None = None
    delta: float | None = None
    period: int = 50
    phi: float = 0.2
    lambda_threshold: float = 0.5
    bc_metric: str = "guide-log-density"
    guide: str = "default"
    guide_checkpoint: str | None = None
    timing: bool = False
    label: str | None = None
    env_params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("epochs", "steps_per_epoch", "eval_trials", "batch_size",
                     "buffer_capacity", "period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.updates_per_epoch < 0:
            raise ValueError("updates_per_epoch must be non-negative")
        if self.hidden is not None:
            self.hidden = tuple(int(h) for h in self.hidden)
        if self.guide not in ("default", "null"):
            raise ValueError(f"guide must be 'default' or 'null', got {self.guide!r}")

    def resolve(self) -> "RunConfig":
        """Copy with every default filled in and the env/agent pair checked."""
        check_compatible(self.env, self.agent)
        safety = self.env not in ATTRACTIVE_ENVS
        updates = {}
        if self.hidden is None:
            updates["hidden"] = (32, 32) if safety else (64, 64)
        if self.q_activation is None:
            updates["q_activation"] = "tanh" if self.env == "safe-cartpole-swingup" else "relu"
        if self.gamma is None:
            updates["gamma"] = make_env(self.env, **self.env_params).spec.gamma
        if self.schedule is None:
            updates["schedule"] = default_schedule(self.agent, safety)
        if self.beta0 is None:
            updates["beta0"] = 1.0
        if self.delta is None:
            updates["delta"] = 0.8
        if self.label is None:
            updates["label"] = self.agent
        return dataclasses.replace(self, **updates)

    def strategy_config(self) -> StrategyConfig:
        cfg = self.resolve()
        return StrategyConfig(
            kind=cfg.agent,
            scheduler=Scheduler(cfg.schedule, cfg.beta0, cfg.delta, cfg.period),
            phi=cfg.phi,
            bc_metric=cfg.bc_metric,
            lambda_threshold=cfg.lambda_threshold,
        )

    def sac_config(self) -> SacConfig:
        cfg = self.resolve()
        return SacConfig(hidden=cfg.hidden, policy_activation=cfg.policy_activation,
                         q_activation=cfg.q_activation, lr=cfg.lr, gamma=cfg.gamma,
                         tau=cfg.tau, batch_size=cfg.batch_size,
                         buffer_capacity=cfg.buffer_capacity, init_alpha=cfg.init_alpha)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "env_params":
                lines.extend(f"env.{k} = {_format_value(v)}" for k, v in sorted(value.items()))
            else:
                lines.append(f"{f.name} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_pairs(parse_pairs(text))

    @classmethod
    def from_pairs(cls, pairs: dict) -> "RunConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs, env_params = {}, {}
        for key, raw in pairs.items():
            key = key.replace("-", "_")
            if key.startswith("env."):
                env_params[key[4:]] = _parse_scalar(raw)
            elif key in kinds and key != "env_params":
                kwargs[key] = _coerce(key, kinds[key], raw)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(env_params=env_params, **kwargs)


def default_schedule(agent: str, safety: bool) -> str:
    """Guide weight over training.

    An attractive guide is most useful early: PAG keeps the full perturbation
    budget while shaped objectives fade out. An emergency guide must stay in
    charge, so PAG only gradually frees the perturbation and shaped objectives
    keep a constant weight.
    """
    if agent == "pag":
        return "rise" if safety else "const"
    if agent in ("pig", "rg"):
        return "const" if safety else "decay"
    return "const"


def check_compatible(env: str, agent: str):
    if env not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {env!r}; choose from {sorted(ENVIRONMENTS)}")
    if agent not in KINDS:
        raise ValueError(f"unknown agent {agent!r}; choose from {KINDS}")
    if env not in CONTINUOUS_ENVS:
        raise ValueError(f"{env} has discrete actions; the continuous-action agents cannot run it")
    if agent == "discrete-pag":
        raise ValueError(f"discrete-pag needs a discrete-action environment, not {env}")


def parse_pairs(text: str) -> dict:
    """Flat ``key = value`` lines; blank lines and ``#`` comments ignored."""
    pairs = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ValueError(f"line {n}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def _coerce(key: str, kind: str, raw: str):
    if raw.lower() == "none":
        if "None" not in kind:
            raise ValueError(f"{key} cannot be none")
        return None
    try:
        if kind.startswith("tuple"):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind.startswith("bool"):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ValueError(f"bad value {raw!r} for {key}") from None
    return raw


@dataclass
class EpochRecord:
    epoch: int
    eval_returns: list
    violations: int = 0
    eval_violations: int = 0
    wallclock_s: float = math.nan

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.eval_returns))


@dataclass
class RunResult:
    config: RunConfig
    records: list
    agent: SacAgent
    strategy: Strategy
    buffer: ReplayBuffer


def build_guide(config: RunConfig):
    """The run's guide; plain SAC never consults one."""
    if config.agent == "sac":
        return None
    guide = make_guide(config.env, checkpoint=config.guide_checkpoint,
                       threshold=config.lambda_threshold, **config.env_params)
    return NullGuide(guide) if config.guide == "null" else guide


def evaluate(strategy, agent, guide, env, k: int, seeds) -> tuple[list, int]:
    """Undiscounted returns of one episode per seed, plus violations seen."""
    returns, violations = [], 0
    for seed in seeds:
        obs = env.reset(seed=int(seed))
        total, done = 0.0, False
        while not done:
            res = env.step(compose_action(strategy, agent, guide, obs, k, "evaluate"))
            total += res.reward
            violations += res.violation
            obs, done = res.next_obs, res.terminal
        returns.append(total)
    return returns, violations


def run_training(config: RunConfig, progress=None, on_epoch=None) -> RunResult:
    """Collect, update, evaluate for ``config.epochs`` epochs.

    The outcome depends only on ``config``; epoch k of a K-epoch run is
    identical to epoch k of any longer run with the same settings.
    ``progress(config, record)`` and ``on_epoch(record, agent, strategy)``
    are called after every epoch.
    """
    cfg = config.resolve()
    env = make_env(cfg.env, **cfg.env_params)
    eval_env = make_env(cfg.env, **cfg.env_params)
    guide = build_guide(cfg)
    spec = env.spec
    agent_seq, xi_seq, env_seq, eval_seq = np.random.SeedSequence(cfg.seed).spawn(4)
    agent = SacAgent(spec.obs_dim, spec.action_dim, cfg.sac_config(),
                     rng=np.random.default_rng(agent_seq))
    strategy = Strategy(cfg.strategy_config(), spec.obs_dim, spec.action_dim, cfg.hidden,
                        rng=np.random.default_rng(xi_seq), lr=cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity, spec.obs_dim, spec.action_dim)
    eval_seeds = np.random.default_rng(eval_seq).integers(0, 2**31 - 1, size=cfg.eval_trials)
    obs = env.reset(seed=int(np.random.default_rng(env_seq).integers(0, 2**31 - 1)))

    records = []
    for k in range(cfg.epochs):
        start = time.perf_counter()
        violations = 0
        for _ in range(cfg.steps_per_epoch):
            action = compose_action(strategy, agent, guide, obs, k, "explore")
            res = env.step(action)
            buffer.add(obs, action, res.reward, res.next_obs, res.terminal and not res.truncated)
            violations += res.violation
            obs = env.reset() if res.terminal else res.next_obs
        for _ in range(cfg.updates_per_epoch):
            update_step(strategy, agent, guide, buffer.sample(cfg.batch_size, agent.rng), k)
        returns, eval_violations = evaluate(strategy, agent, guide, eval_env, k, eval_seeds)
        elapsed = time.perf_counter() - start
        records.append(EpochRecord(k, returns, violations, eval_violations,
                                   elapsed if cfg.timing else math.nan))
        if progress is not None:
            progress(cfg, records[-1])
        if on_epoch is not None:
            on_epoch(records[-1], agent, strategy)
    return RunResult(cfg, records, agent, strategy, buffer)


# Metrics

def normalized_auc(series, cr_star: float) -> float:
    """Rectangle-rule area under CR(k) relative to a perfect agent scoring CR*."""
    cr = np.asarray(series, dtype=np.float64)
    if cr.ndim != 1 or cr.size == 0:
        raise ValueError("need a non-empty 1-D series of returns")
    if cr_star == 0:
        raise ValueError("CR* = 0 leaves the normalized AUC undefined")
    return float(cr.sum() / (cr.size * cr_star))


def exp_smooth(series, weight: float = SMOOTHING) -> np.ndarray:
    """y_0 = x_0, y_t = w y_{t-1} + (1 - w) x_t."""
    if not 0.0 <= weight < 1.0:
        raise ValueError(f"weight must lie in [0, 1), got {weight}")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot smooth an empty series")
    y = np.empty_like(x)
    y[0] = x[0]
    for t in range(1, x.size):
        y[t] = weight * y[t - 1] + (1.0 - weight) * x[t]
    return y


@dataclass
class ResultsTable:
    """All seeds of one agent, with statistics normalized against a comparison set."""

    agent: str
    runs: dict  # seed -> list[EpochRecord]
    mean: np.ndarray
    half_std: np.ndarray
    auc: dict  # seed -> normalized AUC
    cr_star: float
    eval_trials: int = 0
    config: RunConfig | None = None

    @property
    def auc_mean(self) -> float:
        return float(np.mean(list(self.auc.values()))) if self.auc else math.nan

    @property
    def auc_half_std(self) -> float:
        return float(np.std(list(self.auc.values())) / 2.0) if self.auc else math.nan

    @property
    def epochs(self) -> int:
        return len(self.mean)

    def violations(self, column: str = "violations") -> int:
        return sum(getattr(r, column) for recs in self.runs.values() for r in recs)


def _returns(series) -> np.ndarray:
    if len(series) and isinstance(series[0], EpochRecord):
        return np.array([r.mean_return for r in series])
    return np.asarray(series, dtype=np.float64)


def aggregate(agents: dict, cr_star: float | None = None, configs: dict | None = None) -> dict:
    """Fold per-seed results into one :class:`ResultsTable` per agent.

    ``agents`` maps agent label -> {seed: EpochRecords or plain CR series}.
    CR* defaults to the best CR(k) seen by any agent and seed in the set;
    when it is zero every AUC is reported as NaN.
    """
    curves = {label: {seed: _returns(s) for seed, s in seeds.items()}
              for label, seeds in agents.items()}
    all_lengths = {len(c) for seeds in curves.values() for c in seeds.values()}
    if len(all_lengths) > 1:
        raise ValueError(f"ragged inputs: epoch counts {sorted(all_lengths)}")
    if cr_star is None:
        peaks = [c.max() for seeds in curves.values() for c in seeds.values() if c.size]
        cr_star = float(max(peaks)) if peaks else math.nan
    tables = {}
    for label, seeds in curves.items():
        config = (configs or {}).get(label)
        runs = {seed: list(s) if len(s) and isinstance(s[0], EpochRecord) else []
                for seed, s in agents[label].items()}
        trials = config.eval_trials if config is not None else 0
        for recs in runs.values():
            if recs:
                trials = len(recs[0].eval_returns)
        if seeds and all_lengths != {0}:
            stacked = np.stack(list(seeds.values()))
            mean, half_std = stacked.mean(axis=0), stacked.std(axis=0) / 2.0
            # a comparison set that never scores leaves the ratio undefined
            auc = {seed: normalized_auc(c, cr_star) if cr_star else math.nan
                   for seed, c in seeds.items()}
        else:
            mean, half_std, auc = np.empty(0), np.empty(0), {}
        tables[label] = ResultsTable(label, runs, mean, half_std, auc, cr_star, trials, config)
    return tables


# Output files

EPOCH_COLUMNS_HEAD = ["seed", "epoch", "mean_return"]
EPOCH_COLUMNS_TAIL = ["violations", "eval_violations", "wallclock_s"]
SUMMARY_COLUMNS = ["agent", "seeds", "epochs", "cr_star", "auc_mean", "auc_half_std",
                   "violations", "eval_violations"]


def _num(x) -> str:
    return repr(float(x))


def epoch_header(eval_trials: int) -> list:
    return EPOCH_COLUMNS_HEAD + [f"ret_{i}" for i in range(1, eval_trials + 1)] + EPOCH_COLUMNS_TAIL


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_epochs_csv(table: ResultsTable, path):
    rows = []
    for seed in sorted(table.runs):
        for r in table.runs[seed]:
            rows.append([seed, r.epoch, _num(r.mean_return), *map(_num, r.eval_returns),
                         r.violations, r.eval_violations, _num(r.wallclock_s)])
    _write_csv(Path(path), epoch_header(table.eval_trials), rows)


def read_epochs_csv(path) -> dict:
    """seed -> list of EpochRecords, as written by :func:`write_epochs_csv`."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except StopIteration:
        raise ValueError(f"{path} is empty") from None
    ret_cols = [i for i, name in enumerate(header) if name.startswith("ret_")]
    col = {name: i for i, name in enumerate(header)}
    missing = [c for c in EPOCH_COLUMNS_HEAD + EPOCH_COLUMNS_TAIL if c not in col]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    runs = {}
    for row in rows:
        rec = EpochRecord(
            epoch=int(row[col["epoch"]]),
            eval_returns=[float(row[i]) for i in ret_cols],
            violations=int(row[col["violations"]]),
            eval_violations=int(row[col["eval_violations"]]),
            wallclock_s=float(row[col["wallclock_s"]]),
        )
        runs.setdefault(int(row[col["seed"]]), []).append(rec)
    return runs


def write_summary_csv(tables: dict, path):
    rows = []
    for label, t in tables.items():
        if not t.auc:
            continue
        rows.append([label, len(t.auc), t.epochs, _num(t.cr_star), _num(t.auc_mean),
                     _num(t.auc_half_std), t.violations(), t.violations("eval_violations")])
    _write_csv(Path(path), SUMMARY_COLUMNS, rows)


def read_summary_csv(path) -> dict:
    with open(path, newline="") as fh:
        return {row["agent"]: row for row in csv.DictReader(fh)}


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
           "#7f7f7f")


def learning_curve_svg(tables: dict, weight: float = SMOOTHING, width: int = 640,
                       height: int = 400) -> str:
    """Smoothed mean return per agent with a shaded half-std band."""
    left, right, top, bottom = 60, 130, 20, 40
    plot_w, plot_h = width - left - right, height - top - bottom
    curves = []
    for label, t in tables.items():
        if t.epochs == 0:
            continue
        mean = exp_smooth(t.mean, weight)
        band = exp_smooth(t.half_std, weight)
        curves.append((label, mean, mean - band, mean + band))
    lo = min((c[2].min() for c in curves), default=0.0)
    hi = max((c[3].max() for c in curves), default=1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    n = max((len(c[1]) for c in curves), default=1)

    def px(k):
        return left + (plot_w * k / (n - 1) if n > 1 else plot_w / 2)

    def py(v):
        return top + plot_h * (hi - v) / (hi - lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
           'stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
           f'<text x="{left + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
           'font-size="12">epoch</text>',
           f'<text x="{left - 5}" y="{top + 10}" text-anchor="end" font-size="10">{hi:.4g}</text>',
           f'<text x="{left - 5}" y="{top + plot_h}" text-anchor="end" font-size="10">{lo:.4g}</text>',
           f'<text x="{left + plot_w}" y="{top + plot_h + 14}" text-anchor="end" '
           f'font-size="10">{n - 1}</text>']
    for i, (label, mean, low, high) in enumerate(curves):
        colour = PALETTE[i % len(PALETTE)]
        ks = range(len(mean))
        band = [f"{px(k):.2f},{py(v):.2f}" for k, v in zip(ks, high)]
        band += [f"{px(k):.2f},{py(v):.2f}" for k, v in reversed(list(zip(ks, low)))]
        out.append(f'<polygon points="{" ".join(band)}" fill="{colour}" fill-opacity="0.2" '
                   'stroke="none"/>')
        line = " ".join(f"{px(k):.2f},{py(v):.2f}" for k, v in zip(ks, mean))
        out.append(f'<polyline points="{line}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = top + 14 + 16 * i
        out.append(f'<rect x="{left + plot_w + 10}" y="{ly - 8}" width="12" height="8" '
                   f'fill="{colour}"/>')
        out.append(f'<text x="{left + plot_w + 28}" y="{ly}" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write_text(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_outputs(tables: dict, directory) -> Path:
    """Write epochs.csv, config.txt, summary.csv and learning_curve.svg.

    A single agent's files go straight into ``directory``; with several
    agents each gets a subdirectory named after its label.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {directory}: {exc.strerror or exc}") from exc
    for label, t in tables.items():
        target = directory if len(tables) == 1 else directory / label
        target.mkdir(exist_ok=True)
        write_epochs_csv(t, target / "epochs.csv")
        if t.config is not None:
            _write_text(target / "config.txt", t.config.to_text())
    write_summary_csv(tables, directory / "summary.csv")
    _write_text(directory / "learning_curve.svg", learning_curve_svg(tables))
    return directory


# Grids of runs

def run_seeds(config: RunConfig, seeds, cache_dir=None, progress=None) -> dict:
    """seed -> EpochRecords, reusing cached runs of at least as many epochs."""
    out = {}
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=int(seed))
        out[int(seed)] = cached_run(cfg, cache_dir, progress)
    return out


def _cache_key(cfg: RunConfig) -> str:
    return dataclasses.replace(cfg.resolve(), epochs=1, label=None, timing=False).to_text()


def cached_run(config: RunConfig, cache_dir=None, progress=None) -> list:
    """Records of ``run_training(config)``, stored under ``cache_dir``.

    A stored run with more epochs but otherwise identical settings answers a
    shorter request with its prefix (training never looks ahead).
    """
    if cache_dir is None:
        return run_training(config, progress).records
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = _cache_key(config)
    for entry in sorted(cache_dir.glob("run-*")):
        stored = entry / "config.txt"
        if not (entry / "epochs.csv").exists() or not stored.exists():
            continue
        stored_cfg = RunConfig.from_text(stored.read_text())
        if _cache_key(stored_cfg) == key and stored_cfg.epochs >= config.epochs:
            records = read_epochs_csv(entry / "epochs.csv")[config.seed]
            return records[:config.epochs]
    result = run_training(config, progress)
    n = len(list(cache_dir.glob("run-*")))
    entry = cache_dir / f"run-{n:04d}"
    entry.mkdir()
    cfg = result.config
    table = ResultsTable(cfg.label, {cfg.seed: result.records}, np.empty(0), np.empty(0), {},
                         math.nan, cfg.eval_trials, cfg)
    write_epochs_csv(table, entry / "epochs.csv")
    _write_text(entry / "config.txt", cfg.to_text())
    return result.records


@dataclass
class Suite:
    """A declared grid: shared settings, seeds, agents and per-agent sweeps.

    Text form::

        env = point-mass
        epochs = 100
        seeds = 0 1 2
        agents = pag pig
        pag.phi = 0.2 0.5 1.5
        pig.beta0 = 0.5 1 2
    """

    base: dict
    seeds: tuple
    agents: tuple
    sweeps: dict  # agent -> {key: [values]}

    @classmethod
    def from_text(cls, text: str) -> "Suite":
        pairs = parse_pairs(text)
        seeds = tuple(int(s) for s in pairs.pop("seeds", "0").split())
        agents = tuple(pairs.pop("agents", "sac").split())
        sweeps = {}
        for key in [k for k in pairs if k.split(".", 1)[0] in agents and "." in k]:
            agent, knob = key.split(".", 1)
            sweeps.setdefault(agent, {})[knob] = pairs.pop(key).split()
        return cls(pairs, seeds, agents, sweeps)

    def configs(self) -> list:
        out = []
        for agent in self.agents:
            grid = [{}]
            for knob, values in self.sweeps.get(agent, {}).items():
                grid = [{**g, knob: v} for g in grid for v in values]
            for point in grid:
                label = agent + "".join(f"[{k}={v}]" for k, v in point.items())
                pairs = {**self.base, **point, "agent": agent, "label": label}
                out.append(RunConfig.from_pairs(pairs))
        return out


def run_suite(suite: Suite, out_dir=None, cache_dir=None, progress=None) -> dict:
    results, configs = {}, {}
    for cfg in suite.configs():
        if cfg.label in configs:
            raise ValueError(f"suite declares {cfg.label!r} twice")
        configs[cfg.label] = cfg.resolve()
    for label, cfg in configs.items():
        results[label] = run_seeds(cfg, suite.seeds, cache_dir, progress)
    tables = aggregate(results, configs=configs)
    if out_dir is not None:
        write_outputs(tables, out_dir)
    return tables


def save_run(result: RunResult, directory) -> Path:
    """Checkpoint the trained agent next to the run's config."""
    directory = Path(directory)
    save_agent(result.agent, directory / "agent")
    _write_text(directory / "config.txt", result.config.to_text())
    return directory


def guide_reach_rate(guide, env, seeds, radius: float) -> float:
    """Fraction of episodes in which following ``guide`` enters the ``radius`` ball."""
    hits = 0
    for seed in seeds:
        obs, done = env.reset(seed=int(seed)), False
        while not done:
            if env.distance_to_target(obs) <= radius:
                hits += 1
                break
            res = env.step(guide.action(obs))
            obs, done = res.next_obs, res.terminal
    return hits / len(seeds)


def train_guide(path, epochs: int = 20, fraction: float = 0.3, seed: int = 0,
                big_goal_radius: float = 0.1, **overrides) -> Path:
    """Snapshot a SAC policy trained on point-mass with an enlarged goal.

    The snapshot is taken after ``round(fraction * epochs)`` epochs, giving an
    imperfect controller that reliably reaches the big goal ball.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    snapshot = max(1, round(fraction * epochs))
    env_params = {"target_radius": big_goal_radius, **overrides.pop("env_params", {})}
    cfg = RunConfig(env="point-mass", agent="sac", epochs=snapshot, seed=seed,
                    env_params=env_params, **overrides)
    result = run_training(cfg)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_network(result.agent.policy, path)
    return path
