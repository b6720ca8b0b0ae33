"""The full recommender: medication memory graph, dual patient encoder,
visited-history readout and prediction head."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig, Variant
from .ehr import PatientRecord, Visit
from .encoder import AttentionCache, fuse_patient_state, init_attention, init_fusion, pre_combine
from .graph import build_memory_graph, combine_layers, gcn_propagate, lgc_propagate, normalize_adjacency
from .losses import LossWeights, loss_bce, loss_interaction, loss_mll, loss_total
from .memory import VisitedHistory, init_head, predict, read_dynamic_memory, read_memory_bank
from .optim import ParamStore
from .recurrent import gru_cell, init_gru, init_lstm, lstm_cell

MODALITIES = ("diag", "proc")

# parameter-name prefix -> report group
GROUPS = {
    "emb.diag": "embeddings",
    "emb.proc": "embeddings",
    "emb.med": "lgc_base",
    "attn.": "attention",
    "gru.": "gru",
    "lstm.": "lstm",
    "fuse.": "fusion",
    "gcn.": "gcn",
    "head.": "head",
}


def group_of(name: str) -> str:
    for prefix, group in GROUPS.items():
        if name.startswith(prefix):
            return group
    return "other"


@dataclass
class VisitOutput:
    logits: Tensor
    probs: Tensor
    state: Tensor
    o_b: Tensor
    o_d: Tensor
    attention: dict[str, Tensor] = field(default_factory=dict)


class ALGNet:
    def __init__(self, config: TrainConfig, n_diag: int, n_proc: int, n_med: int,
                 ehr_adj: np.ndarray, ddi_adj: np.ndarray):
        self.config = config
        self.sizes = (n_diag, n_proc, n_med)
        self.variant = config.variant_enum
        self.ehr_adj = np.asarray(ehr_adj, dtype=np.float64)
        self.ddi_adj = np.asarray(ddi_adj, dtype=np.float64)
        for a in (self.ehr_adj, self.ddi_adj):
            if a.shape != (n_med, n_med):
                raise ValueError(f"adjacency shape {a.shape} does not match {n_med} medications")
        if self.variant.graph == "lgc":
            self.norm_ehr = Tensor(normalize_adjacency(self.ehr_adj))
            self.norm_ddi = Tensor(normalize_adjacency(self.ddi_adj))
        else:
            self.norm_ehr = Tensor(normalize_adjacency(self.ehr_adj, self_loops=True))
            self.norm_ddi = Tensor(normalize_adjacency(self.ddi_adj, self_loops=True))
        self.params = self._init_params(np.random.default_rng([config.seed, 1]))

    def _init_params(self, rng: np.random.Generator) -> ParamStore:
        # every variant allocates every group in one fixed order, so shared
        # groups get identical initial values across variants for a seed
        c, (n_diag, n_proc, n_med) = self.config, self.sizes
        d = c.dim
        bound = 1.0 / math.sqrt(d)
        ps = ParamStore()
        ps.add("emb.diag", rng.uniform(-bound, bound, (n_diag, d)))
        ps.add("emb.proc", rng.uniform(-bound, bound, (n_proc, d)))
        ps.add("emb.med", rng.uniform(-bound, bound, (n_med, d)))
        for mod in MODALITIES:
            for k, v in init_attention(rng, d, c.heads).items():
                ps.add(f"attn.{mod}.{k}", v)
            for k, v in init_gru(rng, d).items():
                ps.add(f"gru.{mod}.{k}", v)
            for k, v in init_lstm(rng, d).items():
                ps.add(f"lstm.{mod}.{k}", v)
        for k, v in init_fusion(rng, d).items():
            ps.add(f"fuse.{k}", v)
        for g in ("ehr", "ddi"):
            for layer in range(c.lgc_layers):
                ps.add(f"gcn.{g}.w{layer}", rng.uniform(-bound, bound, (d, d)))
        for k, v in init_head(rng, d, n_med).items():
            ps.add(f"head.{k}", v)
        return ps

    def _group(self, prefix: str) -> dict[str, Tensor]:
        return {n[len(prefix):]: p for n, p in self.params.items() if n.startswith(prefix)}

    def active_param_names(self) -> list[str]:
        v = self.variant
        skip = set()
        if not v.attention:
            skip.add("attention")
        if v.sequence != "gru":
            skip.add("gru")
        if v.sequence != "lstm":
            skip.add("lstm")
        if v.graph != "gcn":
            skip.add("gcn")
        return [n for n in self.params if group_of(n) not in skip]

    # forward ------------------------------------------------------------
    def memory_graph(self) -> Tensor:
        c = self.config
        e0 = self.params["emb.med"]
        if self.variant.graph == "lgc":
            e0_term = e0 if c.include_layer0 else None
            e_ehr = combine_layers(lgc_propagate(self.norm_ehr, e0, c.lgc_layers), c.alpha, e0_term)
            e_ddi = combine_layers(lgc_propagate(self.norm_ddi, e0, c.lgc_layers), c.alpha, e0_term)
        else:
            w = lambda g: [self.params[f"gcn.{g}.w{k}"] for k in range(c.lgc_layers)]  # noqa: E731
            e_ehr = gcn_propagate(self.norm_ehr, e0, w("ehr"))
            e_ddi = gcn_propagate(self.norm_ddi, e0, w("ddi"))
        return build_memory_graph(e_ehr, e_ddi, c.beta)

    def forward_patient(self, record: PatientRecord | list[Visit], memory: Tensor | None = None) -> list[VisitOutput]:
        """Run every visit in order with a fresh visited history."""
        visits = record.visits if isinstance(record, PatientRecord) else list(record)
        c, v = self.config, self.variant
        n_med = self.sizes[2]
        memory = self.memory_graph() if memory is None else memory
        history = VisitedHistory(c.dim, n_med)
        tables = {"diag": self.params["emb.diag"], "proc": self.params["emb.proc"]}
        caches, seq_params, seq_state = {}, {}, {}
        for mod in MODALITIES:
            if v.attention:
                caches[mod] = AttentionCache(self._group(f"attn.{mod}."), c.heads)
            if v.sequence == "gru":
                seq_params[mod] = self._group(f"gru.{mod}.")
                seq_state[mod] = Tensor(np.zeros(c.dim))
            elif v.sequence == "lstm":
                seq_params[mod] = self._group(f"lstm.{mod}.")
                seq_state[mod] = (Tensor(np.zeros(c.dim)), Tensor(np.zeros(c.dim)))
        fuse_p, head_p = self._group("fuse."), self._group("head.")

        outputs = []
        for visit in visits:
            pre, attn_w = {}, {}
            for mod, codes in (("diag", visit.d), ("proc", visit.p)):
                if not codes:
                    raise ValueError(f"visit has no {mod} codes")
                x = ad.embedding_sum(tables[mod], codes)
                l = s = None
                if v.sequence == "gru":
                    seq_state[mod] = gru_cell(x, seq_state[mod], seq_params[mod])
                    l = seq_state[mod]
                elif v.sequence == "lstm":
                    seq_state[mod] = lstm_cell(x, seq_state[mod], seq_params[mod])
                    l = seq_state[mod][0]
                if v.attention:
                    caches[mod].push(x)
                    s, attn_w[mod] = caches[mod].read(c.pooling)
                pre[mod] = pre_combine(l, s, c.gamma)
            a = fuse_patient_state(pre["diag"], pre["proc"], fuse_p)
            o_b = read_memory_bank(memory, a)
            o_d = read_dynamic_memory(memory, history, a)
            logits, probs = predict(a, o_b, o_d, head_p)
            outputs.append(VisitOutput(logits, probs, a, o_b, o_d, attn_w))
            if c.history_source == "truth":
                value = visit.multi_hot(n_med)
            else:
                value = (probs.data > c.threshold).astype(np.float64)
            history.insert(a, value)
        return outputs

    def visit_losses(self, visit: Visit, out: VisitOutput, weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
        n_med = self.sizes[2]
        bce = loss_bce(out.logits, visit.multi_hot(n_med))
        mll = loss_mll(out.probs, visit.m, self.config.threshold)
        inter = loss_interaction(out.probs, self.ddi_adj)
        total = loss_total(bce, mll, weights, inter)
        return total, {"bce": bce.item(), "mll": mll.item(), "ddi": inter.item()}

    def patient_loss(self, record: PatientRecord, weights: LossWeights | None = None,
                     memory: Tensor | None = None):
        """Summed objective over the patient's visits plus float components."""
        weights = weights or self.loss_weights()
        outs = self.forward_patient(record, memory)
        total, parts = None, {"bce": 0.0, "mll": 0.0, "ddi": 0.0}
        for visit, out in zip(record.visits, outs):
            loss, comp = self.visit_losses(visit, out, weights)
            total = loss if total is None else total + loss
            for k in parts:
                parts[k] += comp[k]
        return total, parts, outs

    def loss_weights(self) -> LossWeights:
        c = self.config
        return LossWeights(c.theta0, c.theta1, c.w_ddi)

    def predict_patient(self, record: PatientRecord) -> list[np.ndarray]:
        with ad.no_grad():
            return [o.probs.data.copy() for o in self.forward_patient(record)]
