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
    """
    Paso 4: convertir una función de prueba en un patrón de signos
    (elevación a |u| >= 1/2 y luego signos) sin perder más de eps.
    """
    logging.info("--- INICIO PASO 4: BOOST DE FUNCIÓN DE PRUEBA ---")
    code = run(["boost", *sys.argv[1:]])
    if code == 0:
        logging.info("--- PASO 4 COMPLETADO ---")
    sys.exit(code)

if __name__ == "__main__":
    main()
