"""
Run the complete simulation study
Every scenario file x every configured distribution, followed by the Mardia table of simulated stand-ins
"""

import os
import sys
from pathlib import Path

from src.config import load_config, load_scenario, setup_logging
from src.harness import ScenarioRunner, mardia_table, simulate_dataset
from src.publish import Publisher, summary_table


def run_pipeline(config_path=None, replicates=None, seed=None, threads=None):
    """
    Simulate all scenarios and publish per-scenario tables

    Returns:
        Dictionary with success flag, written files and failure counts
    """
    config = load_config(config_path)
    logger = setup_logging(config)
    logger.info("Starting repeated-measures simulation study")

    try:
        if threads is not None:
            config['harness'] = {**config.get('harness', {}), 'threads': threads}
        scenario_dir = Path(config.get('paths', {}).get('scenarios', 'data/scenarios'))
        scenario_files = sorted(scenario_dir.glob('*.yaml'))
        if not scenario_files:
            return {'success': False, 'error': f"No scenario files found in {scenario_dir}"}

        distributions = config.get('harness', {}).get('distributions', ['normal'])
        runner = ScenarioRunner(config)
        publisher = Publisher(config)

        outputs = {}
        failures = 0
        stand_ins = {}
        for path in scenario_files:
            scenario = load_scenario(str(path), config, {'replicates': replicates, 'seed': seed})

            # --- Step 1: Monte Carlo replicates per distribution ---
            for distribution in distributions:
                result = runner.run(scenario, distribution)
                failures += result.n_failed
                outputs[f"{scenario.name}_{distribution}"] = publisher.publish_scenario(result)

                summary = summary_table(result.rows)
                for record in summary.to_dict('records'):
                    logger.info(f"{scenario.name} {distribution:9s} {record['classifier']:10s} "
                                f"{record['trimming']:4s} accuracy {record['accuracy']}  youden {record['youden']}")

            # --- Step 2: One reference-sized normal draw per scenario for the Mardia table ---
            stand_ins[scenario.name] = simulate_dataset(scenario, 'normal', scenario.n_train, scenario.seed)

        mardia_paths = publisher.publish_mardia(mardia_table(stand_ins))

        logger.info("Simulation study completed successfully!")
        return {
            'success': True,
            'outputs': outputs,
            'mardia': mardia_paths['mardia'],
            'failed_fits': failures,
        }

    except Exception as e:
        logger.error(f"Pipeline failed with an unexpected error: {e}", exc_info=True)
        return {'success': False, 'error': str(e)}


if __name__ == "__main__":
    result = run_pipeline(replicates=int(os.getenv('RMCLASS_REPLICATES', '0')) or None)
    if not result['success']:
        print(f"\n=== PIPELINE FAILED ===\nError: {result['error']}")
        sys.exit(1)
