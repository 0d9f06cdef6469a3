"""
Punto de entrada por lotes: `python -m robustez.cli <subcomando> [opciones]`.

Cada subcomando es un comando de gestión de Django; aquí sólo se resuelve el
nombre, se interpretan los argumentos y toda falla sale como una única línea
JSON en stderr.
"""
import os
import sys

SUBCOMMANDS = {
    'train': 'train',
    'evaluate': 'evaluate',
    'compare': 'compare',
    'bound': 'bound',
    'landscape': 'landscape',
    'export-curves': 'export_curves',
}
EXIT_OK = 0


def usage():
    return f"uso: python -m robustez.cli {{{','.join(SUBCOMMANDS)}}} [opciones]"


def dispatch(argv, stdout=None, stderr=None):
    """Ejecuta el subcomando de `argv` y devuelve el código de salida."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fpbetter_backend.settings')
    import django
    django.setup()

    from django.core.management import load_command_class
    from django.core.management.base import CommandError

    from .management.base import EXIT_USAGE, error_line

    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr

    if not argv or argv[0] not in SUBCOMMANDS:
        name = argv[0] if argv else ''
        stderr.write(usage() + '\n')
        stderr.write(error_line('UNKNOWN_SUBCOMMAND', f"Subcomando desconocido: '{name}'") + '\n')
        return EXIT_USAGE

    name = SUBCOMMANDS[argv[0]]
    command = load_command_class('robustez', name)
    parser = command.create_parser('robustez.cli', argv[0])
    try:
        options = vars(parser.parse_args(argv[1:]))
    except CommandError as exc:
        stderr.write(parser.format_usage())
        stderr.write(error_line('USAGE', str(exc)) + '\n')
        return EXIT_USAGE

    args = options.pop('args', ())
    options.update(stdout=stdout, stderr=stderr)
    try:
        command.execute(*args, **options)
    except CommandError as exc:
        message = str(exc)
        if not message.startswith('{'):
            message = error_line('USAGE' if exc.returncode == EXIT_USAGE else 'COMMAND_ERROR', message)
        stderr.write(message + '\n')
        return exc.returncode
    return EXIT_OK


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()
