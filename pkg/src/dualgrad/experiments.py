"""Reusable experiment drivers shared by the CLI and the acceptance suite."""

from dataclasses import dataclass, field

import numpy as np

from .dual import build_dual_attention, descend, start_descent
from .engineering import build_scenario
from .errors import NormalizationDegenerate
from .kernelmap import sample_feature_map
from .metrics import effect_d, hit_position
from .optimizer import OptimizerConfig, OptimizerEnv, TraceRecord, run_two_stage
from .rng import stream
from .sequence import SegmentedSequence
from .transformer import (
    AttentionParams,
    Vocabulary,
    exact_attention,
    generate,
    kernel_attention,
)


@dataclass
class ExperimentConfig:
    """Flat configuration shared by the CLI subcommands."""

    kind: str = "equiv"
    d_i: int = 8
    d_o: int = 6
    d_h: int = 10
    feature_dim: int = 128
    n_t: int = 10
    n_d: int = 6
    k_leads: int = 2
    layers: int = 1
    n: int = 1
    g: int = 1
    vocab_size: int = 24
    seed: int = 0
    reps: int = 10
    steps: int = 5
    schedule: str = "per-token"
    mode: str = "kernel"
    m: int = 3
    iterations: int = 15
    perturbation: bool = True
    paired: bool = False
    tau_sim: float = 0.95
    eps_imp: float = 0.01
    window: int = 3
    demo_len: int = 4
    inject_fault: str = ""
    out: str = ""
    x: str = "step"
    y: str = "se"
    group: str = "seed"


def random_attention(rng: np.random.Generator, d_i: int, d_o: int) -> AttentionParams:
    scale = 1.0 / np.sqrt(d_i)
    return AttentionParams(
        rng.normal(0, scale, (d_o, d_i)),
        rng.normal(0, scale, (d_o, d_i)),
        rng.normal(0, scale, (d_o, d_i)),
    )


def random_sequence(
    rng: np.random.Generator, d_i: int, n_t: int, n_d: int, k_leads: int, n_per: int = 0
) -> SegmentedSequence:
    return SegmentedSequence.build(
        rng.normal(0, 1, (n_t, d_i)),
        rng.normal(0, 1, (n_d, d_i)),
        rng.normal(0, 1, (k_leads, d_i)),
        per=rng.normal(0, 1, (n_per, d_i)) if n_per else None,
        normalize=True,
    )


EQUIV_HEADER = ["seed", "n_d", "step", "se", "schedule", "mode"]


def run_equiv(cfg: ExperimentConfig) -> list[list]:
    """SE-vs-descent-step curves for random configurations, one pass per seed."""
    rows = []
    for rep in range(cfg.reps):
        seed = cfg.seed + rep
        rng = stream(seed, "equiv")
        for attempt in range(20):
            params = random_attention(rng, cfg.d_i, cfg.d_o)
            seq = random_sequence(rng, cfg.d_i, cfg.n_t, cfg.n_d, cfg.k_leads)
            fmap = sample_feature_map(cfg.d_o, cfg.feature_dim, seed=seed * 1000 + attempt)
            pos = len(seq)
            try:
                reference = (
                    kernel_attention(params, fmap, seq, pos)
                    if cfg.mode == "kernel"
                    else exact_attention(params, seq, pos)
                )
                dual = build_dual_attention(params, fmap, seq, pos)
            except NormalizationDegenerate:
                continue
            break
        else:
            raise NormalizationDegenerate(f"seed {seed}: no usable draw in 20 attempts")
        state = start_descent(dual, cfg.schedule)
        n_pass = cfg.n_d if cfg.schedule == "per-token" else int(
            cfg.schedule.split(":")[1]
        ) * cfg.n_d
        # step 0 row: distance of the constant part alone
        pred0 = state.w @ dual.phi_q
        rows.append(
            [seed, cfg.n_d, 0, float(np.sum((reference - pred0) ** 2)), cfg.schedule, cfg.mode]
        )
        descend(dual, state, n_pass, reference=reference)
        for step, se in state.se_log:
            rows.append([seed, cfg.n_d, step, se, cfg.schedule, cfg.mode])
    return rows


FIG7_HEADER = ["run", "token_step", "descent_step", "se"]


@dataclass
class Fig7Report:
    hits: dict = field(default_factory=dict)
    effects: dict = field(default_factory=dict)
    terminal_se: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)


def run_fig7(cfg: ExperimentConfig, gen_steps: int = 5) -> Fig7Report:
    """Good/bad engineered demonstrations: hit positions plus dual SE curves.

    Decoding runs in exact softmax mode so the hit positions do not depend on
    feature-map noise; the SE curves compare the dual descent against the
    kernel-mode forward it is algebraically equal to.
    """
    report = Fig7Report()
    for kind in ("good", "bad"):
        scen = build_scenario(kind, d_i=cfg.d_i, d_o=cfg.d_o, n_t=cfg.n_t, k_leads=cfg.k_leads)
        fmap = sample_feature_map(cfg.d_o, cfg.feature_dim, seed=cfg.seed)

        def forward(seq, pos):
            return exact_attention(scen.params, seq, pos)

        trace = generate(
            forward, scen.seq, gen_steps, scen.vocab, scen.candidate_mask,
            exclude_emitted=True,
        )
        pos = hit_position(trace.ids, scen.target_id)
        report.hits[kind] = pos
        report.effects[kind] = effect_d(pos)

        # one full descent pass per generated token, logged against the
        # kernel-mode output at that position
        seq = scen.seq
        terminal = 0.0
        for token_step, tok in enumerate(trace.ids, start=1):
            p = len(seq)
            reference = kernel_attention(scen.params, fmap, seq, p)
            dual = build_dual_attention(scen.params, fmap, seq, p)
            state = start_descent(dual, "per-token")
            pred0 = state.w @ dual.phi_q
            report.rows.append(
                [kind, token_step, 0, float(np.sum((reference - pred0) ** 2))]
            )
            descend(dual, state, scen.n_d, reference=reference)
            for step, se in state.se_log:
                report.rows.append([kind, token_step, step, se])
            terminal = max(terminal, state.se_log[-1][1])
            seq = seq.append(scen.vocab.input_embeddings[tok])
        report.terminal_se[kind] = terminal
    return report


GENERATE_HEADER = ["step", "position", "token_id"]


def make_toy_env(
    seed: int,
    d_i: int = 6,
    d_o: int = 4,
    vocab_size: int = 24,
    n_candidates: int = 12,
) -> OptimizerEnv:
    """Random but fully deterministic generation environment."""
    rng = stream(seed, "toy-env")
    params = random_attention(rng, d_i, d_o)
    out = rng.normal(0, 1, (vocab_size, d_o))
    feedback = rng.normal(0, 1, (vocab_size, d_i))
    feedback /= np.linalg.norm(feedback, axis=1, keepdims=True)
    vocab = Vocabulary(out, feedback)
    candidates = rng.choice(vocab_size, size=n_candidates, replace=False)
    target = int(candidates[0])

    def forward(seq, pos):
        return exact_attention(params, seq, pos)

    return OptimizerEnv(
        forward=forward,
        instr=rng.normal(0, 1, (4, d_i)),
        leads=rng.normal(0, 1, (2, d_i)),
        vocab=vocab,
        target_id=target,
        candidate_mask=frozenset(int(v) for v in candidates),
        normalize=True,
    )


def run_generate(cfg: ExperimentConfig) -> list[list]:
    """Free-running generation over a random toy environment."""
    env = make_toy_env(cfg.seed, cfg.d_i, cfg.d_o, cfg.vocab_size)
    rng = stream(cfg.seed, "generate-demo")
    demo_ids = rng.integers(0, cfg.vocab_size, size=cfg.n_d)
    seq = SegmentedSequence.build(
        env.instr,
        env.vocab.input_embeddings[demo_ids],
        env.leads,
        normalize=True,
        candidate_mask=env.candidate_mask,
    )
    trace = generate(env.forward, seq, cfg.steps, env.vocab, env.candidate_mask)
    return [
        [i + 1, p, t] for i, (p, t) in enumerate(zip(trace.positions, trace.ids))
    ]


OPTIMIZE_HEADER = [
    "iteration", "path", "effect_d", "similarity", "collapse", "perturbed", "demo_id",
]


def optimizer_config(cfg: ExperimentConfig, perturbation: bool, seed: int) -> OptimizerConfig:
    return OptimizerConfig(
        m=cfg.m,
        iterations=cfg.iterations,
        tau_sim=cfg.tau_sim,
        eps_imp=cfg.eps_imp,
        window=cfg.window,
        master_seed=seed,
        perturbation_enabled=perturbation,
        demo_len=cfg.demo_len,
        gen_steps=cfg.steps,
    )


def trace_rows(trace: list[TraceRecord]) -> list[list]:
    return [
        [r.iteration, r.path, r.effect_d, r.similarity, int(r.collapse), int(r.perturbed), r.demo_id]
        for r in trace
    ]


def run_optimize(cfg: ExperimentConfig) -> list[list]:
    env = make_toy_env(cfg.seed, cfg.d_i, cfg.d_o, cfg.vocab_size)
    trace = run_two_stage(optimizer_config(cfg, cfg.perturbation, cfg.seed), env)
    return trace_rows(trace)


@dataclass
class CollapseSummary:
    seeds: int
    sim_with: float
    sim_without: float
    best_with: float
    best_without: float


def collapse_comparison(cfg: ExperimentConfig, n_seeds: int = 20) -> CollapseSummary:
    """Paired with/without-perturbation runs over shared seeds.

    Mean consecutive similarity is taken over records after each run's first
    collapse event; best effectiveness is the per-run maximum.
    """
    sims = {True: [], False: []}
    bests = {True: [], False: []}
    for rep in range(n_seeds):
        seed = cfg.seed + rep
        env = make_toy_env(seed, cfg.d_i, cfg.d_o, cfg.vocab_size)
        for perturbed in (True, False):
            trace = run_two_stage(optimizer_config(cfg, perturbed, seed), env)
            first = next((i for i, r in enumerate(trace) if r.collapse), None)
            if first is not None:
                tail = [r.similarity for r in trace[first:]]
                sims[perturbed].append(float(np.mean(tail)))
            bests[perturbed].append(max(r.effect_d for r in trace))
    return CollapseSummary(
        seeds=n_seeds,
        sim_with=float(np.mean(sims[True])) if sims[True] else float("nan"),
        sim_without=float(np.mean(sims[False])) if sims[False] else float("nan"),
        best_with=float(np.mean(bests[True])),
        best_without=float(np.mean(bests[False])),
    )
