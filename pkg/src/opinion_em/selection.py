"""Rank macro-parameter scenarios by the likelihood of their best fit."""
import logging
import warnings
from dataclasses import dataclass, field

from joblib import Parallel, delayed

from .em import FitError, fit

logger = logging.getLogger(__name__)


@dataclass
class CandidateResult:
    scenario: object
    log_likelihood: float = float("nan")
    failed: bool = False
    error: str = ""
    fit_result: object = None


@dataclass
class SelectionReport:
    candidates: list
    ranking: list = field(default_factory=list)
    chosen: object = None
    tie: bool = False

    def to_dict(self):
        return {
            "candidates": [
                {"name": c.scenario.name, "log_likelihood": None if c.failed else c.log_likelihood,
                 "failed": c.failed, "error": c.error,
                 "params": vars(c.scenario.params)}
                for c in self.candidates
            ],
            "ranking": [s.name for s in self.ranking],
            "chosen": self.chosen.name if self.chosen is not None else None,
            "tie": self.tie,
        }


def _fit_candidate(trace, candidate, fit_config):
    try:
        result = fit(trace, candidate.params, fit_config)
    except (FitError, ValueError) as exc:
        return CandidateResult(candidate, failed=True, error=str(exc))
    return CandidateResult(candidate, result.log_likelihood, fit_result=result)


def model_select(trace, candidates, fit_config=None, n_jobs=1):
    """Fit ``trace`` under every candidate scenario and rank them by log-likelihood.

    All candidates get the same restart budget. Failed candidates are kept
    in the report but left out of the ranking. Equal likelihoods keep the
    candidate list order and set ``tie``.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("need at least one candidate scenario")
    results = Parallel(n_jobs=n_jobs)(
        delayed(_fit_candidate)(trace, c, fit_config) for c in candidates)
    for r in results:
        if r.failed:
            warnings.warn(f"candidate {r.scenario.name!r} failed: {r.error}", RuntimeWarning)
    ok = [r for r in results if not r.failed]
    ranking = sorted(ok, key=lambda r: -r.log_likelihood)
    report = SelectionReport(results, [r.scenario for r in ranking])
    if ranking:
        report.chosen = ranking[0].scenario
        report.tie = len(ranking) > 1 and ranking[1].log_likelihood == ranking[0].log_likelihood
    return report
