"""
Time-dependent simulation of the age-structured system
"""
from apps.studies.management.base import StudyCommand
from apps.studies.serializers import INIT_SELECTORS
from apps.studies.services import TRAJECTORY_COLUMNS, SimulationService
from apps.studies.writers import norm_series, write_csv, write_json, write_svg


class Command(StudyCommand):
    """
    Integrate the system in time and track the distance to a steady target

    Examples:

    # start on a computed coexistence state (T1 branch at study.xi)
    python manage.py simulate --config run.json --init coexistence

    # small initial populations, up to t = 10
    python manage.py simulate --config run.json --init small --t-end 10
    """

    help = 'Write the norm and distance time series (CSV), a summary (JSON) and the norms against t (SVG)'
    study = 'simulate'

    def add_study_arguments(self, parser):
        parser.add_argument(
            '--init',
            choices=list(INIT_SELECTORS),
            default=None,
            help='Initial state (default: simulate.init)'
        )
        parser.add_argument(
            '--t-end',
            type=float,
            default=None,
            help='Final time (default: simulate.t_end)'
        )

    def run_study(self, run, out_dir, options):
        response = SimulationService.run(run, options['init'], options['t_end'])
        if not response.success:
            return response
        summary = response.data['summary']
        stem = f"simulate_{summary['init']}"
        rows = [[row[name] for name in TRAJECTORY_COLUMNS] for row in response.data['rows']]
        self.written(write_csv(out_dir / f"{stem}.csv", TRAJECTORY_COLUMNS, rows))
        self.written(write_json(out_dir / f"{stem}.json", summary))
        self.written(write_svg(out_dir / f"{stem}.svg", norm_series(response.data['rows'], title=stem)))
        self.stdout.write(f"final distance {summary['final_distance']!r}")
        return response
