"""Translator matching engine: response model, dispatch, and simulator."""

import json

from . import _core
from ._core import PingmatchError, auc, fit_logistic, local_hour, roc_curve, smoothed_rate

__all__ = [
    "Engine",
    "PingmatchError",
    "auc",
    "bootstrap",
    "evaluate",
    "fit_logistic",
    "local_hour",
    "replay",
    "roc_curve",
    "simulate",
    "smoothed_rate",
    "train",
]


def _config(config):
    return json.dumps(config or {})


def simulate(config=None, requests=0, pings=0, epsilon=None, model=None):
    """Run a seeded episode. Returns (log_text, metrics dict)."""
    model_json = json.dumps(model) if isinstance(model, dict) else model
    log_text, metrics = _core.simulate(_config(config), requests, pings, epsilon, model_json)
    return log_text, json.loads(metrics)


def train(log_text, config=None):
    """Select lambda by temporal CV and fit on the whole log. Returns the model dict."""
    return json.loads(_core.train(log_text, _config(config)))


def evaluate(model, log_text):
    return json.loads(_core.evaluate(json.dumps(model), log_text))


def bootstrap(config=None, pings=50_000):
    """Exploration episode, temporal 80/20 split, train and evaluate."""
    return json.loads(_core.bootstrap(_config(config), pings))


def replay(log_text):
    return json.loads(_core.replay(log_text))


class Engine:
    """Live engine behind the HTTP routes; calls return (status, parsed body)."""

    def __init__(self, config=None, clock=None):
        self._engine = _core.Engine(_config(config), clock)

    def call(self, method, path, body=None):
        status, text = self._engine.handle(method, path, "" if body is None else json.dumps(body))
        return status, json.loads(text)

    def tick(self):
        return self._engine.tick()

    def log_text(self):
        return self._engine.log_text()

    @property
    def translator_count(self):
        return self._engine.translator_count()
