"""
Command-line entry point: builds the click group, configures logging and
maps library exceptions onto exit codes (0 ok, 1 usage, 2 data, 3 degeneracy).
"""
import logging
import sys

import click

from dcornet import __version__
from dcornet.commands import setup_commands
from dcornet.utils import DcorException

USAGE_EXIT = 1
DATA_EXIT = 2


class DcorCLI(click.Group):
    """Click group whose failures become one-line diagnostics on stderr."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else 0
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            code = USAGE_EXIT
        except click.ClickException as exc:
            exc.show()
            code = USAGE_EXIT
        except DcorException as exc:
            click.echo(f"error: {exc.message}", err=True)
            code = exc.exit_code
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            code = DATA_EXIT
        if standalone_mode:
            sys.exit(code)
        return code


@click.group(cls=DcorCLI)
@click.version_option(__version__, prog_name="dcornet")
@click.option("-v", "--verbose", is_flag=True, help="Log debug output to stderr.")
def cli(verbose):
    """Distance correlation tools for comparing and training networks."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


setup_commands(cli)


# this only runs if `$ python src/app.py` is executed
if __name__ == '__main__':
    cli()
