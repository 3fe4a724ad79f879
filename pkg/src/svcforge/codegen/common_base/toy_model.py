"""Deterministic integer layered model.

Layer i maps an integer vector x to a_i * x + b_i elementwise, so composing
layers 0..L-1 over any split point reproduces full inference exactly; integer
arithmetic keeps the equality byte-exact across JSON round-trips.

Coefficients come either from MODEL_LAYERS ("a:b,a:b,..." pairs) or are drawn
reproducibly from MODEL_COEFF_SEED for MODEL_LAYER_COUNT layers.
"""

import os
import random


class ToyLayeredModel:
    def __init__(self, coefficients):
        if len(coefficients) < 2:
            raise ValueError("layer count must be >= 2")
        self.coefficients = list(coefficients)

    @property
    def layer_count(self):
        return len(self.coefficients)

    @classmethod
    def from_env(cls):
        raw = os.environ.get("MODEL_LAYERS", "")
        if raw:
            pairs = []
            for item in raw.split(","):
                a, _, b = item.partition(":")
                pairs.append((int(a), int(b)))
            return cls(pairs)
        layer_count = int(os.environ.get("MODEL_LAYER_COUNT", "6"))
        rng = random.Random(int(os.environ.get("MODEL_COEFF_SEED", "7")))
        return cls([(rng.randint(1, 3), rng.randint(0, 5)) for _ in range(layer_count)])

    def apply_range(self, vector, start, end):
        if not 0 <= start <= end < self.layer_count:
            raise ValueError("requires 0 <= start <= end < layer_count")
        out = list(vector)
        for a, b in self.coefficients[start : end + 1]:
            out = [a * x + b for x in out]
        return out

    def infer(self, vector):
        return self.apply_range(vector, 0, self.layer_count - 1)
