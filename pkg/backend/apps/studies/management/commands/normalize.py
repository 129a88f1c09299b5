"""
Birth profile normalization report
"""
from apps.studies.management.base import StudyCommand
from apps.studies.services import NormalizationService
from apps.studies.writers import write_json


class Command(StudyCommand):
    """
    Normalize the configured birth profile so that r(H_[0]) = 1

    Examples:

    # Report lambda_1, c and r(H_[0]) for the configured grid
    python manage.py normalize --config run.json

    # Same, with the report written to a chosen directory
    python manage.py normalize --config run.json --out results/
    """

    help = 'Print the principal eigenvalue, the normalization constant c and r(H_[0]) after normalization'
    study = 'normalize'

    def run_study(self, run, out_dir, options):
        response = NormalizationService.report(run)
        if not response.success:
            return response
        data = response.data
        self.stdout.write(f"lambda_1            {data['lambda_1']!r}")
        self.stdout.write(f"constant c          {data['constant']!r}")
        self.stdout.write(f"r(H_[0])            {data['normalized_radius']!r}")
        if 'constant_continuum' in data:
            self.stdout.write(f"c (continuum)       {data['constant_continuum']!r}")
            self.stdout.write(f"relative difference {data['constant_relative_error']!r}")
        self.written(write_json(out_dir / 'normalize.json', data))
        return response
