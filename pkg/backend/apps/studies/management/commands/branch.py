"""
Branch continuation from a bifurcation point
"""
from apps.continuation.arclength import BranchRecord
from apps.continuation.scenarios import Scenario
from apps.studies.management.base import StudyCommand
from apps.studies.services import BranchService
from apps.studies.writers import bifurcation_diagram, write_csv, write_json, write_svg


class Command(StudyCommand):
    """
    Trace a coexistence branch and classify where it ends

    Examples:

    # eta varies from eta0(study.xi) off the predator-only branch
    python manage.py branch --config run.json --scenario T1

    # xi varies from xi0(study.eta) off the prey-only branch
    python manage.py branch --config run.json --scenario T222

    # eta varies from eta1(study.xi), study.xi < 1
    python manage.py branch --config run.json --scenario T22
    """

    help = 'Write the branch records (CSV), the endpoint summary (JSON) and the bifurcation diagram (SVG)'
    study = 'branch'

    def add_study_arguments(self, parser):
        parser.add_argument(
            '--scenario',
            choices=[scenario.value for scenario in Scenario],
            required=True,
            help='Bifurcation point the branch is launched from'
        )

    def run_study(self, run, out_dir, options):
        scenario = Scenario(options['scenario'])
        response = BranchService.trace(run, scenario)
        if not response.success:
            return response
        data = response.data
        stem = f"branch_{scenario.value}"
        rows = [record.as_row() for record in data['records']]
        self.written(write_csv(out_dir / f"{stem}.csv", BranchRecord.CSV_COLUMNS, rows))
        self.written(write_json(out_dir / f"{stem}.json", {**data['summary'], 'warnings': response.warnings}))
        figure = bifurcation_diagram(data['records'], data['mu_label'], data['overlays'],
                                     title=f"{scenario.value}: {data['summary']['endpoint']['alternative']}")
        self.written(write_svg(out_dir / f"{stem}.svg", figure))
        endpoint = data['summary']['endpoint']
        self.stdout.write(f"{endpoint['stop_reason']} -> {endpoint['alternative']} ({endpoint['label']})")
        return response
