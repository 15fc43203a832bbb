from pathlib import Path

from rest_framework import serializers

from apps.discover.domain import DISCOVERY_MODES, VERDICTS
from apps.discover.services import feature_names
from apps.link.domain import DISAMBIGUATION_CHOICES
from apps.resolve.domain import SURFACE_MODES
from apps.resolve.services import surface_feature_names
from apps.retrieve.domain import FIELD_CHOICES

# Input paths must exist when the config is validated; output directories are created.
INPUT_PATHS = ('corpus_path', 'kb_dir', 'embeddings_path', 'link_gold', 'heading_gold', 'discovery_gold', 'resolution_gold')
OUTPUT_PATHS = ('models_dir', 'output_dir')


class PipelineConfigSerializer(serializers.Serializer):
    # paths
    corpus_path = serializers.CharField(required=False, allow_blank=True, default="")
    kb_dir = serializers.CharField(required=False, allow_blank=True, default="")
    embeddings_path = serializers.CharField(required=False, allow_blank=True, default="")
    models_dir = serializers.CharField(required=False, default="models")
    output_dir = serializers.CharField(required=False, default="output")
    link_gold = serializers.CharField(required=False, allow_blank=True, default="")
    heading_gold = serializers.CharField(required=False, allow_blank=True, default="")
    discovery_gold = serializers.CharField(required=False, allow_blank=True, default="")
    resolution_gold = serializers.CharField(required=False, allow_blank=True, default="")

    # retrieval
    top_k = serializers.IntegerField(min_value=1)
    search_fields = serializers.ChoiceField(choices=FIELD_CHOICES)
    popularity_lambda = serializers.FloatField(min_value=0.0)
    bm25_k1 = serializers.FloatField(min_value=0.0)
    bm25_b = serializers.FloatField(min_value=0.0, max_value=1.0)
    content_weight = serializers.FloatField(min_value=0.0)

    # linking
    expand_vote_types = serializers.BooleanField()
    type_fallback = serializers.BooleanField()
    disambiguation = serializers.ChoiceField(choices=DISAMBIGUATION_CHOICES)
    propagate = serializers.BooleanField()

    # discovery
    wd_topk = serializers.IntegerField(min_value=1)
    wd_fields = serializers.ChoiceField(choices=FIELD_CHOICES)
    collapse_identical_cores = serializers.BooleanField()
    discovery_features = serializers.CharField()
    discovery_mode = serializers.ChoiceField(choices=DISCOVERY_MODES)
    min_tables = serializers.IntegerField(min_value=1)

    # resolution
    theta = serializers.FloatField(min_value=0.0, max_value=1.0)
    surface_mode = serializers.ChoiceField(choices=SURFACE_MODES)
    surface_features = serializers.CharField()
    embedding_threshold = serializers.FloatField(min_value=-1.0, max_value=1.0)
    resolve_verdicts = serializers.CharField()
    candidate_window = serializers.IntegerField(min_value=1)
    candidate_neighbours = serializers.IntegerField(min_value=1)
    mention2vec_dim = serializers.IntegerField(min_value=1)
    mention2vec_window = serializers.IntegerField(min_value=1)
    mention2vec_negatives = serializers.IntegerField(min_value=0)
    mention2vec_epochs = serializers.IntegerField(min_value=1)
    mention2vec_min_count = serializers.IntegerField(min_value=1)

    # learner
    n_trees = serializers.IntegerField(min_value=1)
    max_depth = serializers.IntegerField(min_value=1)
    min_samples_split = serializers.IntegerField(min_value=2)
    min_samples_leaf = serializers.IntegerField(min_value=1)
    cv_folds = serializers.IntegerField(min_value=2)
    seed = serializers.IntegerField(min_value=0)

    def validate_discovery_features(self, value):
        try:
            feature_names(value)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return value

    def validate_surface_features(self, value):
        try:
            surface_feature_names(value)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return value

    def validate_resolve_verdicts(self, value):
        verdicts = tuple(v.strip() for v in value.replace('+', ',').split(',') if v.strip())
        unknown = [v for v in verdicts if v not in VERDICTS]
        if not verdicts or unknown:
            raise serializers.ValidationError(f"Expected verdicts from {list(VERDICTS)}, got {value!r}")
        return ",".join(verdicts)

    def validate(self, attrs):
        missing = {
            name: f"{attrs[name]} does not exist"
            for name in INPUT_PATHS
            if attrs.get(name) and not Path(attrs[name]).exists()
        }
        if missing:
            raise serializers.ValidationError(missing)
        return attrs
