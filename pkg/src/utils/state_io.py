"""StateFile JSON: {"dims": [d_A, d_B], "matrix": {"re": [[...]], "im": [[...]]}}."""
import json
import logging

import numpy as np

from src.errors import ArgumentError
from src.quantum.qstate import DensityMatrix

logger = logging.getLogger(__name__)


def state_to_dict(rho):
    return {
        "dims": list(rho.dims),
        "matrix": {"re": np.real(rho.data).tolist(), "im": np.imag(rho.data).tolist()},
    }


def state_from_dict(data, context="state file"):
    try:
        dims = [int(d) for d in data["dims"]]
        re = np.asarray(data["matrix"]["re"], dtype=float)
        im = np.asarray(data["matrix"]["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ArgumentError(f"{context}: malformed state ({e})")
    if len(dims) != 2:
        raise ArgumentError(f"{context}: expected dims [d_A, d_B], got {dims}")
    if re.ndim != 2 or re.shape[0] != re.shape[1] or re.shape != im.shape:
        raise ArgumentError(f"{context}: matrix must be square with matching re/im parts, got {re.shape} and {im.shape}")
    return DensityMatrix.from_matrix(re + 1j * im, dims, context)


def save_state(rho, path):
    with open(path, "w") as f:
        json.dump(state_to_dict(rho), f, indent=2)
    logger.debug("state with dims %s written to %s", rho.dims, path)


def load_state(path):
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise ArgumentError(f"cannot read state file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ArgumentError(f"state file {path} is not valid JSON: {e}")
    return state_from_dict(data, context=str(path))
