from headcam.objectives import Backbone, build_backbone


def random_backbone(architecture_id: str, seed: int) -> Backbone:
    """Untrained backbone with the architecture's standard initialization, deterministic given the seed.

    Raises:
        ConfigError: If the architecture is not registered.
    """
    return build_backbone(architecture_id, seed=seed).eval()
