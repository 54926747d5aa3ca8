import json
from pathlib import Path

import yaml
from marshmallow import (
    Schema, fields, validate, ValidationError,
    validates_schema, pre_load, post_load, EXCLUDE
)

from dcornet.models import (
    AttackConfig, BSGConfig, DatasetConfig, ModelConfig, PairTrainConfig, RunConfig,
)
from dcornet.utils import InvalidInputError

# --- Reusable rules
POSITIVE = validate.Range(min=1)
NON_NEGATIVE = validate.Range(min=0)
PROBABILITY_LIKE = validate.Range(min=0.0, max=1.0)
ATTACK_KINDS = validate.OneOf(["FGM", "PGD"])

DEFAULT_ATTACKS = [
    {"kind": kind, "epsilon": eps} for kind in ("FGM", "PGD") for eps in (0.03, 0.05, 0.1)
]


class BaseSectionSchema(Schema):
    class Meta:
        unknown = EXCLUDE
        ordered = True


class DatasetSchema(BaseSectionSchema):
    n_classes = fields.Int(load_default=10, validate=validate.Range(min=2))
    dim = fields.Int(load_default=64, validate=POSITIVE)
    n_train = fields.Int(load_default=5000, validate=POSITIVE)
    n_test = fields.Int(load_default=1000, validate=POSITIVE)
    center_scale = fields.Float(load_default=1.0, validate=validate.Range(min=0.0))
    spread = fields.Float(load_default=2.5, validate=validate.Range(min=0.0, min_inclusive=False))


class ModelSchema(BaseSectionSchema):
    hidden = fields.List(fields.Int(validate=POSITIVE), load_default=lambda: [128, 128])
    feature_tap = fields.Int(load_default=None, allow_none=True, validate=NON_NEGATIVE)

    @validates_schema
    def tap_in_range(self, data, **kwargs):
        tap = data.get("feature_tap")
        if tap is not None and tap > len(data.get("hidden", [])):
            raise ValidationError("feature_tap must index a layer of the model", field_name="feature_tap")


class PairSchema(BaseSectionSchema):
    alpha = fields.Float(load_default=0.05, validate=validate.Range(min=0.0))
    epochs = fields.Int(load_default=20, validate=POSITIVE)
    schedule = fields.Str(load_default="alternating_epochs",
                          validate=validate.OneOf(["alternating_epochs"]))
    lr = fields.Float(load_default=0.05, validate=validate.Range(min=0.0))
    momentum = fields.Float(load_default=0.9, validate=PROBABILITY_LIKE)
    batch_size = fields.Int(load_default=128, validate=validate.Range(min=2))
    dc_scale = fields.Str(load_default="batch", validate=validate.OneOf(["batch", "none"]))


class AttackSchema(BaseSectionSchema):
    kind = fields.Str(required=True, validate=ATTACK_KINDS)
    epsilon = fields.Float(required=True, validate=validate.Range(min=0.0))
    pgd_iters = fields.Int(load_default=40, validate=POSITIVE)
    pgd_step = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0.0))
    domain = fields.List(fields.Float(), load_default=lambda: [0.0, 1.0], allow_none=True,
                         validate=validate.Length(equal=2))

    @pre_load
    def normalize(self, data, **kwargs):
        if isinstance(data, dict) and isinstance(data.get("kind"), str):
            data["kind"] = data["kind"].strip().upper()
        return data

    @validates_schema
    def ordered_domain(self, data, **kwargs):
        domain = data.get("domain")
        if domain is not None and domain[0] >= domain[1]:
            raise ValidationError("domain must be (low, high) with low < high", field_name="domain")


class BSGSchema(BaseSectionSchema):
    eta = fields.Float(required=True, validate=validate.Range(min=0.0, min_inclusive=False))
    T = fields.Int(required=True, validate=POSITIVE)
    m = fields.Int(required=True, validate=validate.Range(min=2))
    constraint_mode = fields.Str(load_default="penalty", validate=validate.OneOf(["penalty", "none"]))
    penalty_weight = fields.Float(load_default=1.0, validate=validate.Range(min=0.0))
    schedule = fields.Str(load_default="sqrt_t", validate=validate.OneOf(["sqrt_t", "constant"]))
    objective = fields.Str(load_default="ratio", validate=validate.OneOf(["ratio", "inner"]))
    trace_every = fields.Int(load_default=1, validate=POSITIVE)


class RunConfigSchema(BaseSectionSchema):
    seed = fields.Int(load_default=0, validate=NON_NEGATIVE)
    output_dir = fields.Str(load_default="runs", validate=validate.Length(min=1))
    dataset = fields.Nested(DatasetSchema, load_default=dict)
    model = fields.Nested(ModelSchema, load_default=dict)
    pair = fields.Nested(PairSchema, load_default=dict)
    attacks = fields.List(fields.Nested(AttackSchema), load_default=lambda: list(DEFAULT_ATTACKS))
    bsg = fields.Nested(BSGSchema, load_default=None, allow_none=True)

    @pre_load
    def normalize(self, data, **kwargs):
        if not isinstance(data, dict):
            return data
        if isinstance(data.get("output_dir"), str):
            data["output_dir"] = data["output_dir"].strip()
        return data

    @post_load
    def make_config(self, data, **kwargs):
        # nested load_default dicts are not loaded; fill them through their schemas
        for key, schema in (("dataset", DatasetSchema), ("model", ModelSchema), ("pair", PairSchema)):
            if not data[key]:
                data[key] = schema().load({})
        attacks = []
        for a in data["attacks"]:
            if isinstance(a, dict) and "pgd_iters" not in a:
                a = AttackSchema().load(a)
            attacks.append(AttackConfig(
                a["kind"], a["epsilon"], a["pgd_iters"], a["pgd_step"],
                tuple(a["domain"]) if a["domain"] is not None else None))
        model = data["model"]
        return RunConfig(
            seed=data["seed"],
            output_dir=data["output_dir"],
            dataset=DatasetConfig(**data["dataset"]),
            model=ModelConfig(tuple(model["hidden"]), model["feature_tap"]),
            pair=PairTrainConfig(seed=data["seed"], **data["pair"]),
            attacks=tuple(attacks),
            bsg=BSGConfig(**data["bsg"]) if data.get("bsg") else None,
        )


def load_run_config(path) -> RunConfig:
    """Read a YAML or JSON run configuration and validate it."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise InvalidInputError(f"{path}: cannot parse configuration ({exc})")
    try:
        return RunConfigSchema().load(raw or {})
    except ValidationError as err:
        raise InvalidInputError(f"{path}: invalid configuration: {err.messages}",
                                payload={"messages": err.messages})
