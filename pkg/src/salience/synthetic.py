"""Synthetic worlds with a known joint distribution over triples.

Used by the verification suite and the CLI demo: an explicit joint over
(subject, object) pairs under one relation defines ground-truth
conditionals, so oracle necessity/sufficiency scores (and salience labels)
can be computed exactly, and a text corpus can be sampled to pretrain the
reference backend.

The end-to-end setup pairs a target relation (worded ``needs`` in corpus
text) with a distractor relation (``avoids``) whose co-occurrence
structure is inverted over the same entities. A scoring template whose
relation word never occurs in the corpus then probes a blend of the two
relations, which is the headroom soft prompts are meant to close: they can
learn to select the target relation's meaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AnnotatedTriple, Dataset, PredicateRegistry, Triple
from .scoring import pmi_ratio
from .seeding import rng_for
from .templates import PromptLayout


@dataclass
class SyntheticWorld:
    """A fully known joint P(subject, object) for one relation."""

    subjects: list[str]
    objects: list[str]
    joint: np.ndarray  # (n_s, n_o), strictly positive, sums to 1
    predicate_id: str = "requires"
    wording: str = "needs"  # how corpus text phrases the relation
    n_clusters: int = 1
    per_cluster: int = 0

    def __post_init__(self) -> None:
        self.joint = np.asarray(self.joint, dtype=np.float64)
        assert self.joint.shape == (len(self.subjects), len(self.objects))
        assert np.all(self.joint > 0)
        self.joint = self.joint / self.joint.sum()

    @property
    def p_s(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def p_o(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def oracle_scores(self, alpha: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(necessity, sufficiency, salience) per pair from the true
        distribution, normalized mode, equal mixing."""
        p_s_given_o = self.joint / self.p_o[None, :]
        p_o_given_s = self.joint / self.p_s[:, None]
        nec = np.empty_like(self.joint)
        suf = np.empty_like(self.joint)
        for i in range(self.joint.shape[0]):
            for j in range(self.joint.shape[1]):
                nec[i, j] = pmi_ratio(
                    float(np.log(p_s_given_o[i, j])),
                    float(np.log(self.p_s[i])),
                    float(np.log(self.p_o[j])),
                    alpha, "normalized", "paper",
                )
                suf[i, j] = pmi_ratio(
                    float(np.log(p_o_given_s[i, j])),
                    float(np.log(self.p_o[j])),
                    float(np.log(self.p_s[i])),
                    alpha, "normalized", "paper",
                )
        return nec, suf, 0.5 * suf + 0.5 * nec

    def sample_sentences(
        self, n_sentences: int, seed: int, slotted: PromptLayout | None = None
    ) -> list[str]:
        """Sentences drawn from the joint. With a layout, prompt-placeholder
        tokens occupy the slot positions so that geometry is in-corpus."""
        rng = rng_for(seed, f"synthetic:corpus:{self.wording}:{slotted is not None}")
        flat = self.joint.ravel()
        draws = rng.choice(len(flat), size=n_sentences, p=flat)
        n_o = len(self.objects)
        out = []
        for k in draws:
            s, o = self.subjects[k // n_o], self.objects[k % n_o]
            if slotted is None:
                out.append(f"{s} {self.wording} {o}")
            else:
                words = (
                    [s]
                    + ["[PROMPT]"] * slotted.n_pre
                    + [self.wording]
                    + ["[PROMPT]"] * slotted.n_mid
                    + [o]
                    + ["[PROMPT]"] * slotted.n_post
                )
                out.append(" ".join(words))
        return out

    def labeled_dataset(
        self, alpha: float = 1.0, registry: PredicateRegistry | None = None
    ) -> Dataset:
        """All pairs, labeled salient iff the oracle score exceeds its median."""
        registry = registry if registry is not None else PredicateRegistry()
        predicate = registry.get_or_create(self.predicate_id)
        _, _, salience = self.oracle_scores(alpha)
        threshold = float(np.median(salience))
        records = []
        for i, s in enumerate(self.subjects):
            for j, o in enumerate(self.objects):
                records.append(
                    AnnotatedTriple(
                        Triple(s, predicate, o),
                        salient=int(salience[i, j] > threshold),
                    )
                )
        return Dataset(records, schema="simplified", name="synthetic")


def make_world(
    seed: int,
    n_clusters: int = 2,
    per_cluster: int = 8,
    within_weight: float = 12.0,
    across_weight: float = 1.0,
    popularity_spread: float = 0.0,
    invert: bool = False,
    wording: str = "needs",
    jitter_label: str = "jitter",
) -> SyntheticWorld:
    """Clustered world: subject/object pairs inside a cluster co-occur
    heavily, cross-cluster pairs are background. ``invert`` swaps the two
    weights (used for distractor relations); popularity multipliers skew
    the marginals when a spread is given."""
    rng = rng_for(seed, f"synthetic:world:{jitter_label}")
    n = n_clusters * per_cluster
    subjects = [f"act{i:02d}" for i in range(n)]
    objects = [f"item{j:02d}" for j in range(n)]
    hi, lo = (across_weight, within_weight) if invert else (within_weight, across_weight)
    base = np.full((n, n), lo, dtype=np.float64)
    for c in range(n_clusters):
        a, b = c * per_cluster, (c + 1) * per_cluster
        base[a:b, a:b] = hi
    base *= rng.uniform(0.5, 1.5, size=(n, n))  # pairwise jitter
    if popularity_spread > 0:
        pop_s = np.exp(rng.normal(0.0, popularity_spread, size=n))
        pop_o = np.exp(rng.normal(0.0, popularity_spread, size=n))
        base = base * pop_s[:, None] * pop_o[None, :]
    return SyntheticWorld(
        subjects=subjects,
        objects=objects,
        joint=base,
        wording=wording,
        n_clusters=n_clusters,
        per_cluster=per_cluster,
    )


def contrastive_corpus(
    seed: int,
    world: SyntheticWorld,
    layout: PromptLayout,
    sentences_per_block: int = 2000,
) -> tuple[SyntheticWorld, list[str]]:
    """The target world's corpus plus a structurally inverted distractor
    relation over the same entities, in both plain and prompt-slotted
    geometry. Returns (distractor_world, corpus)."""
    distractor = make_world(
        seed,
        n_clusters=world.n_clusters,
        per_cluster=world.per_cluster,
        invert=True,
        wording="avoids",
        jitter_label="distractor",
    )
    corpus = (
        world.sample_sentences(sentences_per_block, seed)
        + world.sample_sentences(sentences_per_block, seed, slotted=layout)
        + distractor.sample_sentences(sentences_per_block, seed)
        + distractor.sample_sentences(sentences_per_block, seed, slotted=layout)
    )
    return distractor, corpus
