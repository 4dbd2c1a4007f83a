import pytest

from stackdet.synth import (
    PopulationConfig,
    default_partition_specs,
    generate_population,
)


@pytest.fixture(scope="session")
def benchmark_population_small_dim():
    """Full benchmark-shaped population at a small dimension (cheap to share)."""
    config = PopulationConfig(dimension=8, seed=97)
    train_spec, dev_spec, test_spec = default_partition_specs()
    return generate_population(config, train_spec, dev_spec, test_spec)
