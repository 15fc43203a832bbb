"""
Run configuration loading and the run log.

Precedence: command-line flags > config file > ``settings.PIPELINE_DEFAULTS``.
The config file is a flat ``key = value`` text file read with python-dotenv.
"""

import hashlib
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Optional

from django.conf import settings
from django.utils import timezone
from dotenv import dotenv_values

from core.exceptions import ConfigError

from .domain import PipelineConfig, RunManifest
from .models import PipelineRun
from .serializers import PipelineConfigSerializer

logger = logging.getLogger(__name__)


def config_keys():
    return set(PipelineConfigSerializer().fields)


def load_config(path: Optional[Path] = None, **overrides) -> PipelineConfig:
    values: Dict[str, object] = dict(settings.PIPELINE_DEFAULTS)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"Config file {path} does not exist")
        from_file = dotenv_values(path)
        unknown = sorted(set(from_file) - config_keys())
        if unknown:
            raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
        values.update({k: v for k, v in from_file.items() if v is not None})
    unknown = sorted(set(overrides) - config_keys())
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    values.update({k: (str(v) if isinstance(v, Path) else v) for k, v in overrides.items() if v is not None})

    serializer = PipelineConfigSerializer(data=values)
    if not serializer.is_valid():
        errors = "; ".join(f"{field}: {' '.join(map(str, msgs))}" for field, msgs in serializer.errors.items())
        raise ConfigError(f"Invalid configuration: {errors}")
    return PipelineConfig.from_validated(serializer.validated_data)


def file_digest(path: Path) -> str:
    """SHA-256 of a file, or of every file under a directory in sorted order."""
    path = Path(path)
    digest = hashlib.sha256()
    files = sorted(p for p in path.rglob('*') if p.is_file()) if path.is_dir() else [path]
    for member in files:
        if path.is_dir():
            digest.update(str(member.relative_to(path)).encode("utf-8"))
        digest.update(member.read_bytes())
    return digest.hexdigest()


def input_digests(config: PipelineConfig) -> Dict[str, str]:
    inputs = {
        'corpus': config.corpus_path,
        'kb': config.kb_dir,
        'embeddings': config.embeddings_path,
    }
    return {name: file_digest(path) for name, path in inputs.items() if path is not None and path.exists()}


@contextmanager
def tracked_run(stage: str, config: PipelineConfig):
    """Record a PipelineRun row around a stage; yields the row so callers can attach a manifest."""
    run = PipelineRun.objects.create(stage=stage, config=config.to_dict())
    try:
        yield run
    except Exception as exc:
        run.status = "failed"
        run.error_message = str(exc)
        run.finished_at = timezone.now()
        run.save(update_fields=["status", "error_message", "finished_at", "manifest"])
        raise
    run.status = "success"
    run.finished_at = timezone.now()
    run.save(update_fields=["status", "finished_at", "manifest"])
    logger.info(f"Run {run.id} ({stage}) finished")


def manifest_for(config: PipelineConfig) -> RunManifest:
    return RunManifest(config=config.to_dict(), inputs=input_digests(config))
