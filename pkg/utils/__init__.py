"""
Utils package initialization.
Exports main utility functions and classes.
"""

from .io import (
    create_output_directory,
    read_config_text,
    load_yaml_config,
    config_hash,
    save_dataframe_to_csv,
    save_text,
    load_csv_data,
    get_data_file_info,
)

from .logger import (
    DataLogger,
    ValuationLogger,
    setup_logging,
)

from .seeding import (
    set_random_seed,
    check_seed,
    path_seed_sequence,
    path_generator,
    SeedManager,
    get_reproducible_config,
)

__all__ = [
    # IO utilities
    'create_output_directory',
    'read_config_text',
    'load_yaml_config',
    'config_hash',
    'save_dataframe_to_csv',
    'save_text',
    'load_csv_data',
    'get_data_file_info',
    # Logging utilities
    'DataLogger',
    'ValuationLogger',
    'setup_logging',
    # Seeding utilities
    'set_random_seed',
    'check_seed',
    'path_seed_sequence',
    'path_generator',
    'SeedManager',
    'get_reproducible_config',
]
