import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Configuration settings for the shift laboratory"""

    # Logging
    LOG_LEVEL = os.getenv('SHIFTLAB_LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('SHIFTLAB_LOG_FILE', 'logs/shiftlab.log')

    # Storage
    CACHE_DIR = os.getenv('SHIFTLAB_CACHE_DIR', '.shiftlab_cache')
    WORKERS = int(os.getenv('SHIFTLAB_WORKERS', '1'))

    # Divergence estimation
    PAIR_BUDGET_OBSERVED = 500_000  # Index pairs for the observed statistic
    PAIR_BUDGET_PERMUTATION = 200_000  # Index pairs per permutation
    MEDIAN_SUBSAMPLE = 5_000
    KNN_K = 5
    PCA_COMPONENTS = 2

    # Permutation tests
    PERMUTATIONS_ED_MMD = 1000
    PERMUTATIONS_KL = 500

    # Data handling
    LOG_EPSILON = 1e-8
    VAL_FRACTION = 0.10
    TEST_FRACTION = 0.20

    # Architecture search and proxy study
    N_ARCHITECTURES = 200
    SEARCH_SEED = 42
    QUALITY_PERCENTILE = 90.0

    # Physical model calibration
    CALIBRATION_TOL = 1e-10
    CALIBRATION_MAX_ITER = 2000

    # Serialisation
    FLOAT_FORMAT = '%.12g'

    @classmethod
    def validate(cls):
        """Validate configuration values"""
        from utils.errors import ConfigurationError

        problems = []
        for var in ('PAIR_BUDGET_OBSERVED', 'PAIR_BUDGET_PERMUTATION', 'MEDIAN_SUBSAMPLE',
                    'KNN_K', 'PCA_COMPONENTS', 'PERMUTATIONS_ED_MMD', 'PERMUTATIONS_KL',
                    'N_ARCHITECTURES', 'CALIBRATION_MAX_ITER'):
            if getattr(cls, var) < 1:
                problems.append(f"{var} must be >= 1")

        for var in ('VAL_FRACTION', 'TEST_FRACTION'):
            value = getattr(cls, var)
            if not 0.0 <= value < 1.0:
                problems.append(f"{var} must lie in [0, 1)")

        if cls.WORKERS < 1:
            problems.append("WORKERS must be >= 1")
        if not 0.0 < cls.QUALITY_PERCENTILE < 100.0:
            problems.append("QUALITY_PERCENTILE must lie in (0, 100)")
        if cls.LOG_EPSILON <= 0 or cls.CALIBRATION_TOL <= 0:
            problems.append("LOG_EPSILON and CALIBRATION_TOL must be positive")

        if problems:
            raise ConfigurationError(f"Invalid configuration: {'; '.join(problems)}")

        return True
