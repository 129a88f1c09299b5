"""
Semi-trivial branch table
"""
from apps.studies.management.base import StudyCommand
from apps.studies.services import SemitrivialService
from apps.studies.writers import write_csv


class Command(StudyCommand):
    """
    Solve the single-species problem over a parameter range

    Examples:

    # Prey-only branch u_eta over ranges.eta
    python manage.py semitrivial --config run.json

    # Predator-only branch v_xi over ranges.xi
    python manage.py semitrivial --config run.json --species v

    # Explicit parameter values
    python manage.py semitrivial --config run.json --values 0.9 1.2 2.0
    """

    help = 'Tabulate norms, trace range and the identity residual |param r(H_[alpha z]) - 1| per parameter'
    study = 'semitrivial'

    def add_study_arguments(self, parser):
        parser.add_argument(
            '--species',
            choices=['u', 'v'],
            default='u',
            help='u: prey-only branch in eta (alpha1); v: predator-only branch in xi (beta1)'
        )
        parser.add_argument(
            '--values',
            nargs='+',
            type=float,
            default=None,
            help='Parameter values (default: ranges.eta or ranges.xi)'
        )

    def run_study(self, run, out_dir, options):
        species = options['species']
        response = SemitrivialService.table(run, species, options['values'])
        if not response.success:
            return response
        columns = SemitrivialService.COLUMNS
        rows = [[row[name] for name in columns] for row in response.data['rows']]
        self.written(write_csv(out_dir / f"semitrivial_{species}.csv", columns, rows))
        return response
