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
    """Paso 3: norma 1 de una respuesta al impulso leída de un CSV."""
    logging.info("--- INICIO PASO 3: SISTEMA ÚNICO ---")
    code = run(["single", *sys.argv[1:]])
    if code == 0:
        logging.info("--- PASO 3 COMPLETADO ---")
    sys.exit(code)

if __name__ == "__main__":
    main()
