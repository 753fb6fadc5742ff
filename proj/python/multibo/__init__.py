"""Preference-based Bayesian optimization with multiwise choices."""

import json

from ._core import (
    NumericalError,
    ProtocolError,
    ServiceError,
    Session,
    encode_pgm,
    expected_improvement,
    laplace_fit,
    multinomial_logit_loglik,
    objective_value,
    replay,
    run_autonomous,
    subset_loglik,
    subset_marginals,
    test_pattern,
    theta_bounds,
    warp,
)
from ._core import SessionManager as _SessionManager

__all__ = [
    "NumericalError",
    "ProtocolError",
    "ServiceError",
    "Service",
    "Session",
    "encode_pgm",
    "expected_improvement",
    "laplace_fit",
    "multinomial_logit_loglik",
    "objective_value",
    "replay",
    "run_autonomous",
    "subset_loglik",
    "subset_marginals",
    "test_pattern",
    "theta_bounds",
    "warp",
]


class Service:
    """In-process session service speaking the same JSON payloads as the HTTP API."""

    def __init__(self, data_dir):
        self._impl = _SessionManager(str(data_dir))

    def restore(self):
        return self._impl.restore()

    def create_session(self, request=None):
        return json.loads(self._impl.create_session(json.dumps(request or {})))

    def get_batch(self, session_id):
        return json.loads(self._impl.get_batch(session_id))

    def submit_choice(self, session_id, batch_id, winners):
        body = json.dumps({"batch_id": batch_id, "winners": list(winners)})
        return json.loads(self._impl.submit_choice(session_id, body))

    def get_status(self, session_id):
        return json.loads(self._impl.get_status(session_id))

    def get_final(self, session_id):
        return json.loads(self._impl.get_final(session_id))

    def preview(self, name):
        return self._impl.preview(name)
