from eapmd5_lab.common import base_dir

experiments_out = base_dir.joinpath("experiments_out")
sweep_csv = experiments_out.joinpath("sweep.csv")
comparison_toml = experiments_out.joinpath("comparison.toml")
