import logging
from typing import Any, Dict, List


logger = logging.getLogger(__name__)

INPUT_PREVIEW_LENGTH = 200


def format_validation_errors(errors: List[Dict[str, Any]]) -> List[Dict[str, str]]:
    """格式化验证错误信息"""
    formatted_errors = []
    for error in errors:
        raw_input = error.get("input")
        preview = str(raw_input)
        formatted_error = {
            "field": " → ".join(str(loc) for loc in error.get("loc", ())) or "<root>",
            "message": error.get("msg", ""),
            "type": error.get("type", ""),
            "input_type": type(raw_input).__name__,
            "input_preview": preview[:INPUT_PREVIEW_LENGTH] + "..." if len(preview) > INPUT_PREVIEW_LENGTH else preview,
        }
        formatted_errors.append(formatted_error)
    return formatted_errors


def render_errors(formatted_errors: List[Dict[str, str]]) -> str:
    """每个字段一行: field: message (input_type=..., input=...)"""
    return "\n".join(
        f"  {e['field']}: {e['message']} (input_type={e['input_type']}, input={e['input_preview']})"
        for e in formatted_errors
    )
