import sys
import logging
from src.cli import run

# Configuración de logs
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    datefmt='%H:%M:%S'
)

def main():
    """Paso 1: listar las familias de kernels disponibles y sus parámetros."""
    logging.info("--- INICIO PASO 1: CATÁLOGO DE KERNELS ---")
    code = run(["zoo", *sys.argv[1:]])
    if code == 0:
        logging.info("--- PASO 1 COMPLETADO ---")
    sys.exit(code)

if __name__ == "__main__":
    main()
