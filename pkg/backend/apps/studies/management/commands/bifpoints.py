"""
Bifurcation point locator
"""
from apps.studies.management.base import StudyCommand
from apps.studies.services import BifurcationPointService
from apps.studies.writers import write_json


class Command(StudyCommand):
    """
    Locate bifurcation parameters off the semi-trivial branches

    Examples:

    # eta0 = 1 / r(G_xi) for every xi in ranges.xi
    python manage.py bifpoints --config run.json --which eta0

    # xi0(eta) for eta in ranges.eta
    python manage.py bifpoints --config run.json --which xi0

    # eta1(xi) needs xi < 1
    python manage.py bifpoints --config run.json --which eta1 --values 0.85 0.9 0.95

    # residual curve eta r(G_xi) - 1 over ranges.xi_scan at study.eta
    python manage.py bifpoints --config run.json --which xi1-scan

    # upper estimate of delta over the eta ladder
    python manage.py bifpoints --config run.json --which delta
    """

    help = 'Compute eta0, eta1, xi0, the xi1 residual scan or the delta estimate with diagnostics'
    study = 'bifpoints'

    def add_study_arguments(self, parser):
        parser.add_argument(
            '--which',
            choices=list(BifurcationPointService.KINDS),
            required=True,
            help='Quantity to locate'
        )
        parser.add_argument(
            '--values',
            nargs='+',
            type=float,
            default=None,
            help='Fixed parameter values (xi for eta0/eta1, eta for xi0/xi1-scan, eta_max for delta)'
        )

    def run_study(self, run, out_dir, options):
        which = options['which']
        response = BifurcationPointService.locate(run, which, options['values'])
        if not response.success:
            return response
        for row in response.data['results']:
            self.stdout.write(f"{which}({row['input']!r}) = {row['value']!r} [{row['status']}]")
        self.written(write_json(out_dir / f"bifpoints_{which}.json", response.data))
        return response
