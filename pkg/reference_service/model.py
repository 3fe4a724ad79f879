"""Model adapter for microsoft/resnet-50.

Serves image-classification requests on the shared API server: the server routes
/infer and /infer_partial here and /health to the common health check.
Inputs are application/json payloads carrying a flattened integer pixel
vector; outputs are the class-score vector produced by the layered runtime.
"""

from toy_model import ToyLayeredModel

MODEL_ID = "microsoft/resnet-50"
TASK_CATEGORY = "image-classification"
INPUT_MEDIA_TYPE = "application/json"

_model = None


def load():
    global _model
    _model = ToyLayeredModel.from_env()
    return _model


def _require_model():
    if _model is None:
        raise RuntimeError("model not loaded; call load() first")
    return _model


def layer_count():
    return _require_model().layer_count


def coefficients():
    return _require_model().coefficients


def infer(vector):
    return _require_model().infer(vector)


def infer_partial(vector, start_layer, end_layer):
    return _require_model().apply_range(vector, start_layer, end_layer)
