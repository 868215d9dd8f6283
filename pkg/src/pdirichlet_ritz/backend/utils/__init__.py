import hashlib
from decimal import ROUND_HALF_UP, Decimal
from typing import Any

import orjson


def classic_round(number):
    return int(Decimal(number).to_integral_value(rounding=ROUND_HALF_UP))


def config_digest(payload: Any) -> str:
    """sha256 of the key-sorted orjson dump, stable across runs and platforms."""
    data = orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)
    return hashlib.sha256(data).hexdigest()
