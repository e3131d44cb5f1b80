from .manifest import (
    DatasetManifest,
    LabelLeakError,
    ManifestError,
    SampleRecord,
    load_image,
    load_manifest,
    resize_shorter_side,
    save_image,
    save_manifest,
)
from .styles import CLEAN, COLORSHIFT, FOG, SCENARIOS, DomainStyleSpec, scenario_styles
from .synth import SceneLayoutError, generate_domain_pair, generate_scene

__all__ = [
    "CLEAN",
    "COLORSHIFT",
    "FOG",
    "SCENARIOS",
    "DatasetManifest",
    "DomainStyleSpec",
    "LabelLeakError",
    "ManifestError",
    "SampleRecord",
    "SceneLayoutError",
    "generate_domain_pair",
    "generate_scene",
    "load_image",
    "load_manifest",
    "resize_shorter_side",
    "save_image",
    "save_manifest",
    "scenario_styles",
]
