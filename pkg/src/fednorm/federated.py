"""Federated simulation (FedAvg / FedBN), classical baselines and cross-evaluation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import gds_volume
from .norm import METHOD_ORDER, NormMethod
from .nn.rng import RngStream
from .unet import TrainReport, UNet, UNetConfig, predict_volume, train_epochs
from .volume import extract_slices

log = logging.getLogger(__name__)

FEDAVG, FEDBN = "fedavg", "fedbn"
AGGREGATIONS = (FEDAVG, FEDBN)


@dataclass
class ClientState:
    client_id: int
    method: NormMethod
    train: list  # SliceSample
    test: list  # normalized Study objects for on-site testing
    val: list = field(default_factory=list)
    params: dict | None = None
    norm_store: dict = field(default_factory=dict)

    @property
    def sample_count(self) -> int:
        return len(self.train)

    @property
    def train_subjects(self) -> set[str]:
        return {s.subject_id for s in self.train}


@dataclass
class FLConfig:
    rounds: int = 32
    local_epochs: int = 2
    aggregation: str = FEDAVG
    lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.rounds < 1 or self.local_epochs < 1:
            raise ValueError("rounds and local_epochs must both be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")


def _check_topology(params_list):
    if not params_list:
        raise ValueError("nothing to aggregate")
    names = list(params_list[0])
    for p in params_list[1:]:
        if list(p) != names or any(p[n].shape != params_list[0][n].shape for n in names):
            raise ValueError("parameter topologies differ between clients")
    return names


def fedavg_aggregate(params_list, sample_counts, names=None):
    """Sample-weighted mean of every parameter, accumulated in float64 in list order."""
    all_names = _check_topology(params_list)
    names = all_names if names is None else names
    counts = np.asarray(sample_counts, dtype=np.float64)
    if counts.size != len(params_list) or np.any(counts <= 0):
        raise ValueError("need one positive sample count per client")
    weights = counts / counts.sum()
    out = {}
    for n in names:
        acc = np.zeros(params_list[0][n].shape, dtype=np.float64)
        for w, p in zip(weights, params_list):
            acc += w * p[n].astype(np.float64)
        out[n] = acc.astype(np.float32)
    return out


def fedbn_aggregate(params_list, sample_counts, kinds: dict[str, str]):
    """FedAvg over non-norm parameters; norm parameters stay with their client.

    Returns ``(shared, stores)`` where ``stores[k]`` holds client k's norm values.
    """
    names = _check_topology(params_list)
    if set(kinds) != set(names):
        raise ValueError("kind tags do not match parameter names")
    shared_names = [n for n in names if kinds[n] != "norm"]
    norm_names = [n for n in names if kinds[n] == "norm"]
    shared = fedavg_aggregate(params_list, sample_counts, shared_names)
    stores = [{n: p[n].copy() for n in norm_names} for p in params_list]
    return shared, stores


def local_update(model: UNet, global_params: dict, client: ClientState, epochs: int, lr: float,
                 batch_size: int, rng: RngStream, aggregation: str = FEDAVG):
    """Load the broadcast weights (plus the personal norm store under FedBN) and train locally.

    Returns ``(params, sample_count, report)``.  A fresh Adam state is used every round.
    """
    if aggregation == FEDBN:
        model.load_state(global_params, kinds=("conv", "other"))
        model.load_state(client.norm_store, kinds=("norm",))
    else:
        model.load_state(global_params)
    report = train_epochs(model, client.train, [], epochs, batch_size, lr, rng=rng)
    # local training hands back the final weights; best-loss selection is for classical runs only
    return model.state(), client.sample_count, report


def evaluate_subjects(model: UNet, studies, batch_size: int = 16) -> list[float]:
    """3D generalized Dice per subject over that subject's kept slices."""
    scores = []
    for study in studies:
        samples = extract_slices(study)
        if not samples:
            raise ValueError(f"subject {study.subject_id} has no slices passing the filter")
        p, t = predict_volume(model, samples, batch_size)
        scores.append(gds_volume(p, t).gds)
    return scores


@dataclass
class FederatedResult:
    aggregation: str
    global_params: dict  # FedAvg global model, or the shared backbone under FedBN
    personalized: dict  # NormMethod -> full params (FedBN) ; empty for FedAvg
    round_log: list[dict]

    def params_for(self, method: NormMethod) -> dict:
        if self.aggregation == FEDBN:
            return self.personalized[NormMethod(method)]
        return self.global_params


def _onsite(model: UNet, params: dict, client: ClientState, batch_size: int) -> float:
    if not client.test:
        return float("nan")
    model.load_state(params)
    return float(np.mean(evaluate_subjects(model, client.test, batch_size)))


def run_federated(clients: list[ClientState], cfg: FLConfig, unet_cfg: UNetConfig,
                  on_round=None) -> FederatedResult:
    """R rounds of broadcast -> local update on every client -> aggregate -> on-site test."""
    if not clients:
        raise ValueError("need at least one client")
    clients = sorted(clients, key=lambda c: c.client_id)
    if len({c.client_id for c in clients}) != len(clients):
        raise ValueError("duplicate client ids")
    if any(c.sample_count == 0 for c in clients):
        raise ValueError("every client needs at least one training slice")
    models = {c.client_id: UNet(unet_cfg) for c in clients}
    template = models[clients[0].client_id]
    kinds = dict(zip(template.names, template.kinds))
    norm_names = [n for n, k in kinds.items() if k == "norm"]
    global_params = template.state()
    for c in clients:
        # round-0 broadcast includes norm params once; FedBN keeps them local afterwards
        c.norm_store = {n: global_params[n].copy() for n in norm_names}
    round_log = []
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None

    def work(c: ClientState, r: int):
        rng = RngStream(cfg.seed, "fl", cfg.aggregation, "client", c.client_id, "round", r)
        return local_update(models[c.client_id], global_params, c, cfg.local_epochs, cfg.lr,
                            cfg.batch_size, rng, cfg.aggregation)

    try:
        for r in range(cfg.rounds):
            if pool is None:
                results = [work(c, r) for c in clients]
            else:
                results = list(pool.map(lambda c: work(c, r), clients))
            params_list = [res[0] for res in results]
            counts = [res[1] for res in results]
            if cfg.aggregation == FEDAVG:
                global_params = fedavg_aggregate(params_list, counts)
                for c, p in zip(clients, params_list):
                    c.params = p
            else:
                global_params, stores = fedbn_aggregate(params_list, counts, kinds)
                for c, p, store in zip(clients, params_list, stores):
                    c.params = p
                    c.norm_store = store
            for c, res in zip(clients, results):
                report: TrainReport = res[2]
                params = global_params if cfg.aggregation == FEDAVG else {**global_params, **c.norm_store}
                entry = {
                    "round": r,
                    "client_id": c.client_id,
                    "train_loss": report.train_loss[-1] if report.train_loss else None,
                    "onsite_test_gds": _onsite(models[c.client_id], params, c, cfg.batch_size),
                }
                round_log.append(entry)
            if on_round is not None:
                on_round(r, global_params, clients)
            log.info("%s round %d/%d mean onsite GDS %.4f", cfg.aggregation, r + 1, cfg.rounds,
                     np.nanmean([e["onsite_test_gds"] for e in round_log[-len(clients):]]))
    finally:
        if pool is not None:
            pool.shutdown()

    personalized = {}
    if cfg.aggregation == FEDBN:
        personalized = {c.method: {**global_params, **c.norm_store} for c in clients}
    return FederatedResult(cfg.aggregation, global_params, personalized, round_log)


@dataclass
class BaselineResult:
    label: str
    params: dict
    report: TrainReport
    train_subjects: set[str]


CENTRALIZED = "Centralized"


def run_baselines(clients: list[ClientState], unet_cfg: UNetConfig, epochs: int = 16,
                  batch_size: int = 16, lr: float = 1e-3, seed: int = 0,
                  checkpoint_on: str = "train") -> dict[str, BaselineResult]:
    """Six single-trained models (one per arm) plus one centralized model on the union."""
    clients = sorted(clients, key=lambda c: c.client_id)
    out = {}
    jobs = [(c.method.label, c.train, c.val) for c in clients]
    jobs.append((CENTRALIZED, [s for c in clients for s in c.train], [s for c in clients for s in c.val]))
    for label, train, val in jobs:
        model = UNet(unet_cfg)
        rng = RngStream(seed, "baseline", label)
        report = train_epochs(model, train, val, epochs, batch_size, lr, rng=rng, checkpoint_on=checkpoint_on)
        out[label] = BaselineResult(label, report.best_params, report, {s.subject_id for s in train})
        log.info("baseline %s best epoch %s loss %.4f", label, report.best_epoch, report.best_loss or float("nan"))
    return out


@dataclass
class DiceMatrix:
    rows: list[str]  # model labels, excluding the Average row
    cols: list[str]  # test-set labels, excluding the Average column
    mean: np.ndarray  # (len(rows), len(cols))
    std: np.ndarray
    st_rows: list[str]  # rows averaged into the Average row
    scores: dict = field(default_factory=dict)  # (row, col) -> per-subject list

    def average_column(self):
        """Per row: mean over the test sets, and the spread of those means."""
        return self.mean.mean(axis=1), self.mean.std(axis=1)

    def average_row(self):
        idx = [self.rows.index(r) for r in self.st_rows]
        return self.mean[idx].mean(axis=0), self.mean[idx].std(axis=0)

    def cell(self, row: str, col: str) -> tuple[float, float]:
        i, j = self.rows.index(row), self.cols.index(col)
        return float(self.mean[i, j]), float(self.std[i, j])

    def average(self, row: str) -> float:
        return float(self.average_column()[0][self.rows.index(row)])


def cross_evaluate(models: dict, common_test: dict, unet_cfg: UNetConfig, st_rows=None,
                   batch_size: int = 16) -> DiceMatrix:
    """Evaluate each model on each normalized copy of the common test set.

    ``models`` maps a row label to either one parameter dict or a mapping
    ``NormMethod -> params`` (personalized FedBN models).  ``common_test``
    maps ``NormMethod`` to the list of normalized studies.
    """
    methods = [m for m in METHOD_ORDER if m in common_test]
    ids = [[s.subject_id for s in common_test[m]] for m in methods]
    if any(i != ids[0] for i in ids):
        raise ValueError("common test sets must hold the same subjects in the same order")
    rows = list(models)
    cols = [m.label for m in methods]
    mean = np.zeros((len(rows), len(cols)))
    std = np.zeros_like(mean)
    scores = {}
    model = UNet(unet_cfg)
    for i, row in enumerate(rows):
        entry = models[row]
        for j, m in enumerate(methods):
            if entry and isinstance(next(iter(entry)), NormMethod):
                if m not in entry:
                    raise KeyError(f"{row}: no personalized model for {m.label}")
                params = entry[m]
            else:
                params = entry
            model.load_state(params)
            s = evaluate_subjects(model, common_test[m], batch_size)
            scores[(row, cols[j])] = s
            mean[i, j], std[i, j] = np.mean(s), np.std(s)
    st_rows = list(st_rows) if st_rows is not None else [r for r in rows if r in cols]
    return DiceMatrix(rows, cols, mean, std, st_rows, scores)
