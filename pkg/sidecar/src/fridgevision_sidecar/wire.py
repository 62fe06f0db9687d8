"""Wire protocol v1 schemas (one JSON object per newline-terminated line).

Kept as plain JSON Schema dicts so tests can validate every emitted
frame with jsonschema and other implementations can vendor the file.
"""

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["v", "type", "request_id", "model_id", "latency_ms", "detections"],
    "properties": {
        "v": {"const": 1},
        "type": {"const": "detections"},
        "request_id": {"type": "string"},
        "model_id": {"type": "string"},
        "latency_ms": {"type": "number", "minimum": 0},
        "detections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["category", "confidence", "box"],
                "properties": {
                    "category": {"type": "string"},
                    "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                    "box": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 4,
                        "maxItems": 4,
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["v", "type", "request_id", "message"],
    "properties": {
        "v": {"const": 1},
        "type": {"const": "error"},
        "request_id": {"type": ["string", "null"]},
        "message": {"type": "string"},
    },
    "additionalProperties": False,
}

ANY_RESPONSE_SCHEMA = {"oneOf": [RESPONSE_SCHEMA, ERROR_SCHEMA]}
