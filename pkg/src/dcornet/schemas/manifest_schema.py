from marshmallow import (
    Schema, fields, validate, ValidationError,
    validates_schema, pre_load, EXCLUDE
)

# --- Reusable rules
POSITIVE = validate.Range(min=1)
NON_NEGATIVE = validate.Range(min=0)
DTYPES = validate.OneOf(["f32", "f64"])
NAME_LEN = validate.Length(min=1, max=255)


class LayerEntrySchema(Schema):
    class Meta:
        unknown = EXCLUDE
        ordered = True

    name = fields.Str(required=True, validate=NAME_LEN)
    n = fields.Int(required=True, strict=True, validate=POSITIVE)
    p = fields.Int(required=True, strict=True, validate=POSITIVE)
    dtype = fields.Str(required=True, validate=DTYPES)
    offset = fields.Int(required=True, strict=True, validate=NON_NEGATIVE)

    @pre_load
    def normalize(self, data, **kwargs):
        if isinstance(data, dict) and isinstance(data.get("dtype"), str):
            data["dtype"] = data["dtype"].strip().lower()
        return data


class ManifestSchema(Schema):
    """Leading JSON block of a DCFD file."""
    class Meta:
        unknown = EXCLUDE
        ordered = True

    format_version = fields.Int(required=True, strict=True, validate=POSITIVE)
    model_name = fields.Str(required=True, validate=NAME_LEN)
    layers = fields.List(fields.Nested(LayerEntrySchema), required=True,
                         validate=validate.Length(min=1))
    sample_ids = fields.List(fields.Str(), load_default=list)
    extra = fields.Dict(keys=fields.Str(), load_default=dict)

    @validates_schema
    def consistent_layers(self, data, **kwargs):
        layers = data.get("layers") or []
        names = [entry["name"] for entry in layers]
        if len(set(names)) != len(names):
            raise ValidationError("layer names must be unique", field_name="layers")
        # parameter containers hold matrices of different heights
        if data.get("extra", {}).get("kind") == "mlp":
            return
        counts = {entry["n"] for entry in layers}
        if len(counts) > 1:
            raise ValidationError(f"layers disagree on n: {sorted(counts)}", field_name="layers")
        ids = data.get("sample_ids") or []
        if ids and counts and len(ids) != counts.pop():
            raise ValidationError("sample_ids length does not match n", field_name="sample_ids")
