"""Probabilistic model of annotator responses.

An annotator answers a multiple-choice question with K displayed outputs
plus a none-of-the-above option. With probability 1 - e they pick the
correct response; with probability e they pick uniformly among all K+1
responses (the correct one and NONE included in the uniform draw). The
error rate e follows a logistic model over per-annotator, per-domain,
and shared bias terms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

NONE_RESPONSE = "none"
ERROR_RESPONSE = "error"


class ModelError(ValueError):
    pass


@dataclass
class AnnotatorParams:
    alpha: dict[str, float] = field(default_factory=dict)
    beta: dict[str, float] = field(default_factory=dict)
    bias: float = 0.0

    def to_json(self) -> dict:
        return {"alpha": dict(self.alpha), "beta": dict(self.beta), "bias": self.bias}

    @classmethod
    def from_json(cls, doc: dict) -> "AnnotatorParams":
        return cls(
            alpha={k: float(v) for k, v in doc.get("alpha", {}).items()},
            beta={k: float(v) for k, v in doc.get("beta", {}).items()},
            bias=float(doc.get("bias", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "AnnotatorParams":
        return cls.from_json(json.loads(Path(path).read_text()))


def logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def fixed_error_params(error: float = 0.3) -> AnnotatorParams:
    """The pre-fitting model: one shared error rate for every annotator/domain."""
    return AnnotatorParams(bias=logit(error))


ORACLE = AnnotatorParams(bias=-math.inf)  # error rate exactly 0


def error_rate(params: AnnotatorParams, annotator: str | None = None, domain: str | None = None) -> float:
    """Probability the annotator answers at random; missing ids contribute 0."""
    z = params.bias
    z += params.alpha.get(annotator, 0.0) if annotator is not None else 0.0
    z += params.beta.get(domain, 0.0) if domain is not None else 0.0
    if z == -math.inf:
        return 0.0
    return logistic(z)


@dataclass
class ResponseDistribution:
    probs: dict[str, float]

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ModelError(f"response probabilities sum to {total}, not 1")
        if any(p < 0 for p in self.probs.values()):
            raise ModelError("negative response probability")

    def __getitem__(self, response: str) -> float:
        return self.probs[response]


def response_likelihood(correct_response: str, options: list[str], e: float) -> ResponseDistribution:
    """Distribution over the K+1 responses (options must include NONE).

    The correct response gets (1-e) + e/(K+1); every other response gets
    e/(K+1), so the probabilities sum to one in closed form.
    """
    if correct_response not in options:
        raise ModelError(f"correct response {correct_response!r} not among options {options!r}")
    n = len(options)
    uniform = e / n
    probs = {}
    for opt in options:
        probs[opt] = (1.0 - e) + uniform if opt == correct_response else uniform
    return ResponseDistribution(probs)


def likelihood_of(response: str, correct_response: str, n_responses: int, e: float) -> float:
    """p(response | correct_response) without building the full distribution."""
    uniform = e / n_responses
    return (1.0 - e) + uniform if response == correct_response else uniform
